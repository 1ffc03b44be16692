// Acceptance suite. Runs each criterion as a selectable check and prints
// one PASS/FAIL line per criterion.
//
//   acceptance --setup --work-dir W     prepare dataset + trained model
//   acceptance --only N --work-dir W    run criterion N (1..10)
//   acceptance --work-dir W             setup if needed, then run all
//
// Real MNIST IDX files are used when BBADV_MNIST_DIR points at a directory
// holding train-images-idx3-ubyte / train-labels-idx1-ubyte /
// t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte; otherwise the built-in
// synthetic digit set stands in at the same 10k/2k scale.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bbadv/analysis.hpp"
#include "bbadv/dataset.hpp"
#include "bbadv/nn.hpp"
#include "bbadv/perturb.hpp"
#include "bbadv/rng.hpp"
#include "bbadv/runner.hpp"

using namespace bbadv;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Env {
  fs::path work;
  fs::path train_images, train_labels, test_images, test_labels;
  fs::path model_path;
  std::string dataset_name;
};

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string strip_time_column(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i == 5) continue;  // time
      os << cols[i] << ",";
    }
    os << "\n";
  }
  return os.str();
}

Env make_env(const fs::path& work) {
  Env e;
  e.work = work;
  e.model_path = work / "model.bin";
  const char* mnist = std::getenv("BBADV_MNIST_DIR");
  if (mnist && fs::exists(fs::path(mnist) / "train-images-idx3-ubyte")) {
    e.dataset_name = "mnist";
  } else {
    e.dataset_name = "synth-digits";
  }
  e.train_images = work / "data" / "train-images.idx";
  e.train_labels = work / "data" / "train-labels.idx";
  e.test_images = work / "data" / "test-images.idx";
  e.test_labels = work / "data" / "test-labels.idx";
  return e;
}

void truncate_dataset(RawDataset& ds, int n) {
  if (n < ds.count()) {
    ds.labels.resize(n);
    ds.pixels.resize(static_cast<std::size_t>(n) * ds.rows * ds.cols);
  }
}

int setup(const Env& e) {
  const auto t0 = Clock::now();
  fs::create_directories(e.work / "data");

  RawDataset train, test;
  if (e.dataset_name == "mnist") {
    const fs::path dir(std::getenv("BBADV_MNIST_DIR"));
    train = load_idx_files((dir / "train-images-idx3-ubyte").string(),
                           (dir / "train-labels-idx1-ubyte").string(),
                           "train");
    test = load_idx_files((dir / "t10k-images-idx3-ubyte").string(),
                          (dir / "t10k-labels-idx1-ubyte").string(), "test");
  } else {
    train = make_synth_digits(10000, 42, "train");
    test = make_synth_digits(2000, mix64(42), "test");
  }
  truncate_dataset(train, 10000);
  truncate_dataset(test, 2000);
  write_bytes(e.train_images, write_idx_images(train));
  write_bytes(e.train_labels, write_idx_labels(train));
  write_bytes(e.test_images, write_idx_images(test));
  write_bytes(e.test_labels, write_idx_labels(test));

  const NormStats stats = fit_norm_stats(train);
  const auto train_set = normalize(train, stats);
  const auto test_set = normalize(test, stats);

  Model model = make_model(Arch::Conv, {1, train.cols, train.rows},
                           train.class_count, 1);
  TrainConfig tc;
  tc.learning_rate = 0.15;
  tc.epochs = 10;
  tc.batch_size = 32;
  tc.seed = 1;
  tc.verbose = true;
  const TrainReport rep = train_sgd(model, train_set, test_set, tc);
  model.save(e.model_path.string());
  save_norm_stats(stats, e.model_path.string() + ".norm");

  std::ofstream marker(e.work / "setup.txt", std::ios::trunc);
  marker << "dataset " << e.dataset_name << "\n"
         << "train_accuracy " << rep.train_accuracy << "\n"
         << "test_accuracy " << *rep.test_accuracy << "\n";
  std::printf(
      "setup: dataset=%s train_acc=%.2f%% test_acc=%.2f%% (%.0f s)\n",
      e.dataset_name.c_str(), 100.0 * rep.train_accuracy,
      100.0 * *rep.test_accuracy, elapsed(t0));
  return 0;
}

bool setup_done(const Env& e) {
  return fs::exists(e.work / "setup.txt") && fs::exists(e.model_path);
}

bool report(int n, bool pass, const std::string& what,
            const std::string& detail, double secs) {
  std::printf("[%s] criterion %d: %s (%s; %.1f s)\n", pass ? "PASS" : "FAIL",
              n, what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  return pass;
}

ExperimentConfig base_attack_config(const Env& e) {
  ExperimentConfig cfg;
  cfg.model_path = e.model_path.string();
  cfg.images_path = e.test_images.string();
  cfg.labels_path = e.test_labels.string();
  cfg.dataset_name = e.dataset_name;
  cfg.network_name = "toy-conv";
  cfg.workers = 2;
  return cfg;
}

// ---------------------------------------------------------------- c1

bool criterion_1(const Env&) {
  const auto t0 = Clock::now();
  bool ok = true;
  Rng rng(1);
  for (int it = 0; it < 100000; ++it) {
    const double r = rng.range(0.0, 2.0);
    const float lb = static_cast<float>(rng.range(-8.0, 0.0));
    const float ub = static_cast<float>(rng.range(1e-9, 8.0));
    const double v = rng.range(lb, ub);
    const double out = cyclic(r, v, Bounds{lb, ub});
    if (!(out >= lb && out <= ub)) {
      ok = false;
      break;
    }
  }
  const Bounds b{-1.0f, 1.0f};
  ok = ok && std::abs(cyclic(1.5, 0.8, b) - (-0.8)) < 1e-6;
  ok = ok && std::abs(cyclic(1.5, -0.8, b) - 0.8) < 1e-6;
  const double secs = elapsed(t0);
  return report(1, ok && secs < 5.0, "cyclic closure",
                "100000 tuples + 2 hand cases", secs);
}

// ---------------------------------------------------------------- c2

bool criterion_2(const Env&) {
  const auto t0 = Clock::now();
  const ProbVector p{{0.25, 0.1, 0.2, 0.45}};
  bool ok = top_k(p, 1) == std::vector<int>{4} &&
            top_k(p, 2) == std::vector<int>{4, 1} &&
            top_k(p, 3) == std::vector<int>{4, 1, 3};
  Rng rng(2);
  for (int it = 0; ok && it < 10000; ++it) {
    const int c = 3 + static_cast<int>(rng.below(5));
    std::vector<double> probs(c);
    double sum = 0.0;
    for (auto& v : probs) {
      v = rng.range(0.001, 1.0);
      sum += v;
    }
    for (auto& v : probs) v /= sum;
    const ProbVector pv{probs};
    const int label = 1 + static_cast<int>(rng.below(c));
    for (int k = c; k >= 2; --k) {
      if (is_k_misclassified(pv, label, k)) {
        for (int kp = 1; kp < k; ++kp) {
          if (!is_k_misclassified(pv, label, kp)) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) break;
    }
  }
  const double secs = elapsed(t0);
  return report(2, ok && secs < 5.0, "pi / k-misclassification semantics",
                "worked example + 10000 monotonicity draws", secs);
}

// ---------------------------------------------------------------- c3

double rel_l2(const Volume& a, const Volume& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    num += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    den += b.v[i] * b.v[i];
  }
  return std::sqrt(num) / std::sqrt(den);
}

bool criterion_3(const Env&) {
  const auto t0 = Clock::now();
  bool ok = true;
  double worst_linear = 0.0, worst_conv = 0.0;
  {
    const Model m = make_model(Arch::Linear, {1, 10, 10}, 5, 301);
    const ModelOracle oracle(m);
    Rng rng(31);
    for (int it = 0; it < 20; ++it) {
      std::vector<float> d(100);
      for (auto& v : d) v = static_cast<float>(rng.range(-1.5, 1.5));
      const Image img(1, 10, 10, std::move(d), Bounds{-3.0f, 3.0f});
      const int label = 1 + static_cast<int>(rng.below(5));
      OracleSession s(oracle);
      const double err =
          rel_l2(fd_gradient(s, img, label, 1e-3), m.input_gradient(img, label));
      worst_linear = std::max(worst_linear, err);
    }
    ok = ok && worst_linear <= 1e-4;
  }
  {
    const Model m = make_model(Arch::Conv2, {1, 12, 12}, 4, 302);
    const ModelOracle oracle(m);
    Rng rng(32);
    for (int it = 0; it < 20; ++it) {
      std::vector<float> d(144);
      for (auto& v : d) v = static_cast<float>(rng.range(-1.5, 1.5));
      const Image img(1, 12, 12, std::move(d), Bounds{-3.0f, 3.0f});
      const int label = 1 + static_cast<int>(rng.below(4));
      OracleSession s(oracle);
      const double err =
          rel_l2(fd_gradient(s, img, label, 1e-3), m.input_gradient(img, label));
      worst_conv = std::max(worst_conv, err);
    }
    ok = ok && worst_conv <= 1e-3;
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "worst rel-L2: linear %.2e (<=1e-4), conv %.2e (<=1e-3)",
                worst_linear, worst_conv);
  const double secs = elapsed(t0);
  return report(3, ok && secs < 60.0, "gradient oracle equivalence", detail,
                secs);
}

// ---------------------------------------------------------------- c4

bool criterion_4(const Env& e) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = base_attack_config(e);
  cfg.technique = "locsearch";
  cfg.n_images = 50;
  cfg.seed = 1004;
  cfg.out_dir = (e.work / "c4").string();
  const ExperimentOutput out = run_experiment(cfg);

  bool ok = true;
  int audited_rounds = 0;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const auto& outcome = out.records[i].outcome;
    std::uint64_t total = 0;
    for (const auto& rec : out.transcripts[i].records()) {
      const auto cand = rec.at("candidates").get<std::uint64_t>();
      const auto q = rec.at("queries").get<std::uint64_t>();
      if (q != cand + 1) ok = false;
      total += q;
      ++audited_rounds;
    }
    if (total != outcome.queries_used) ok = false;
    if (outcome.perturbed_pixels.size() > 750) ok = false;
    if (outcome.rounds_used > 150) ok = false;
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "%zu runs, %d rounds audited, per-round queries == cands+1",
                out.records.size(), audited_rounds);
  const double secs = elapsed(t0);
  return report(4, ok && secs < 600.0, "budget accounting", detail, secs);
}

// ---------------------------------------------------------------- c5

bool criterion_5(const Env& e) {
  const auto t0 = Clock::now();
  const Model model = Model::load(e.model_path.string());
  const NormStats stats = load_norm_stats(e.model_path.string() + ".norm");
  const RawDataset raw_test =
      load_idx_files(e.test_images.string(), e.test_labels.string(), "test");
  const double acc = evaluate_accuracy(model, normalize(raw_test, stats));

  ExperimentConfig cfg = base_attack_config(e);
  cfg.technique = "locsearch";
  cfg.n_images = 100;
  cfg.k = 1;
  cfg.seed = 1005;
  cfg.save_pairs = 4;
  cfg.out_dir = (e.work / "c5").string();
  const ExperimentOutput out = run_experiment(cfg);

  const double success_rate =
      static_cast<double>(out.metrics.n_success) / out.metrics.n_images;
  bool all_valid = true;
  for (const auto& rec : out.records) {
    if (rec.outcome.success &&
        !(rec.outcome.adversarial_valid && validate(*rec.outcome.adversarial))) {
      all_valid = false;
    }
  }
  const double ptbpix = out.metrics.ptbpixels.value_or(1e9);
  const bool ok = acc >= 0.95 && success_rate >= 0.70 && ptbpix <= 5.0 &&
                  all_valid && out.metrics.n_success > 0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "test_acc %.2f%% (>=95), success %.0f%% (>=70), ptbpixels "
                "%.2f%% (<=5), all valid %d",
                100.0 * acc, 100.0 * success_rate, ptbpix, all_valid ? 1 : 0);
  const double secs = elapsed(t0);
  return report(5, ok && secs < 1800.0, "desk-scale attack corridor", detail,
                secs);
}

// ---------------------------------------------------------------- c6

bool criterion_6(const Env& e) {
  const auto t0 = Clock::now();
  const double ps[] = {1.0, 5.0, 10.0, 100.0};
  std::vector<double> means, ses;
  for (double p : ps) {
    ExperimentConfig cfg = base_attack_config(e);
    cfg.technique = "randadv";
    cfg.ra.p = p;
    cfg.ra.set_size = 1;
    cfg.ra.trial_budget = 0;  // default: half the pixels
    cfg.n_images = 50;
    cfg.seed = 1006;  // same images and sampling for every p
    cfg.out_dir = (e.work / ("c6_p" + std::to_string(static_cast<int>(p))))
                      .string();
    const ExperimentOutput out = run_experiment(cfg);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const auto& rec : out.records) {
      const double f = rec.outcome.critical_fraction.value_or(0.0);
      sum += f;
      sum2 += f * f;
      ++n;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    means.push_back(mean);
    ses.push_back(std::sqrt(var / n));
  }
  bool ok = true;
  for (std::size_t i = 0; i + 1 < means.size(); ++i) {
    const double slack = std::sqrt(ses[i] * ses[i] + ses[i + 1] * ses[i + 1]);
    if (means[i + 1] < means[i] - slack) ok = false;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "mean critical fraction: p1 %.4f, p5 %.4f, p10 %.4f, p100 %.4f",
                means[0], means[1], means[2], means[3]);
  const double secs = elapsed(t0);
  return report(6, ok && secs < 900.0, "randadv trend over p", detail, secs);
}

// ---------------------------------------------------------------- c7

bool criterion_7(const Env& e) {
  const auto t0 = Clock::now();
  std::vector<double> succ;
  std::vector<std::optional<double>> ptbpix;
  for (int k = 1; k <= 4; ++k) {
    ExperimentConfig cfg = base_attack_config(e);
    cfg.technique = "locsearch";
    cfg.k = k;
    cfg.n_images = 50;
    cfg.seed = 1007;
    cfg.out_dir = (e.work / ("c7_k" + std::to_string(k))).string();
    const ExperimentOutput out = run_experiment(cfg);
    succ.push_back(static_cast<double>(out.metrics.n_success) /
                   out.metrics.n_images);
    ptbpix.push_back(out.metrics.ptbpixels);
  }
  bool ok = true;
  for (int i = 0; i + 1 < 4; ++i) {
    if (succ[i + 1] > succ[i]) ok = false;
    if (ptbpix[i] && ptbpix[i + 1] && *ptbpix[i + 1] < *ptbpix[i]) ok = false;
  }
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "success %.0f/%.0f/%.0f/%.0f%%, ptbpixels %.2f/%.2f/%.2f/%.2f",
                100 * succ[0], 100 * succ[1], 100 * succ[2], 100 * succ[3],
                ptbpix[0].value_or(-1), ptbpix[1].value_or(-1),
                ptbpix[2].value_or(-1), ptbpix[3].value_or(-1));
  const double secs = elapsed(t0);
  return report(7, ok && secs < 2700.0, "k-sweep trend", detail, secs);
}

// ---------------------------------------------------------------- c8

bool criterion_8(const Env&) {
  const auto t0 = Clock::now();
  const double z = proportion_z(0.23, 0.1, 200);
  bool ok = std::abs(z - 6.12) <= 0.01;

  SaliencyMap map;
  map.width = 40;
  map.height = 50;
  map.score.resize(2000);
  for (std::size_t i = 0; i < 2000; ++i) map.score[i] = 2000.0 - i;
  std::vector<PixelLoc> perturbed;
  for (int i = 0; i < 46; ++i) perturbed.push_back({i / 50 + 1, i % 50 + 1});
  for (int i = 400; i < 554; ++i) {
    perturbed.push_back({i / 50 + 1, i % 50 + 1});
  }
  const OverlapStat st = overlap_stat(perturbed, map, 0.1);
  ok = ok && std::abs(st.overlap - 0.23) < 1e-12 && std::abs(st.z - z) < 1e-12;

  char detail[96];
  std::snprintf(detail, sizeof(detail), "z(0.23, 0.1, 200) = %.4f", z);
  return report(8, ok, "z-statistic exactness", detail, elapsed(t0));
}

// ---------------------------------------------------------------- c9

bool criterion_9(const Env& e) {
  const auto t0 = Clock::now();
  bool ok = true;

  // idx round trip + wrong magic
  {
    std::vector<std::uint8_t> img, lab;
    auto be32 = [](std::vector<std::uint8_t>& v, std::uint32_t x) {
      v.push_back(x >> 24);
      v.push_back((x >> 16) & 0xff);
      v.push_back((x >> 8) & 0xff);
      v.push_back(x & 0xff);
    };
    be32(img, 0x00000803);
    be32(img, 2);
    be32(img, 3);
    be32(img, 3);
    for (int i = 1; i <= 18; ++i) img.push_back(static_cast<std::uint8_t>(i));
    be32(lab, 0x00000801);
    be32(lab, 2);
    lab.push_back(4);
    lab.push_back(9);
    const RawDataset ds = load_idx(img, lab, "t");
    ok = ok && write_idx_images(ds) == img && write_idx_labels(ds) == lab;
    for (int i = 0; i < 18; ++i) {
      ok = ok && ds.pixels[i] == static_cast<std::uint8_t>(i + 1);
    }
    try {
      load_idx(lab, lab, "t");
      ok = false;
    } catch (const FormatError&) {
    }
    try {
      load_idx(img, img, "t");
      ok = false;
    } catch (const FormatError&) {
    }
  }

  // model save/load: bit-identical forward outputs
  {
    const Model m = Model::load(e.model_path.string());
    const fs::path copy = e.work / "c9_model.bin";
    m.save(copy.string());
    const Model loaded = Model::load(copy.string());
    ok = ok && loaded.save_bytes() == m.save_bytes();
    const NormStats stats = load_norm_stats(e.model_path.string() + ".norm");
    const RawDataset raw =
        load_idx_files(e.test_images.string(), e.test_labels.string(), "t");
    const auto imgs = normalize(raw, stats);
    for (int i = 0; i < 5 && i < static_cast<int>(imgs.size()); ++i) {
      ok = ok && m.forward(imgs[i].image).probs ==
                     loaded.forward(imgs[i].image).probs;
    }
  }

  // normalize / export round trip on raw bytes
  {
    Rng rng(91);
    RawDataset ds;
    ds.rows = 8;
    ds.cols = 6;
    ds.labels.assign(3, 1);
    ds.class_count = 1;
    ds.pixels.resize(3 * 48);
    for (auto& b : ds.pixels) b = static_cast<std::uint8_t>(rng.below(256));
    const NormStats st = fit_norm_stats(ds);
    const auto imgs = normalize(ds, st);
    for (int i = 0; i < 3; ++i) {
      std::vector<std::uint8_t> back;
      ok = ok && denormalize_bytes(imgs[i].image, st, back) == 0;
      const auto want = ds.image_bytes(i);
      ok = ok && std::equal(back.begin(), back.end(), want.begin());
    }
    const fs::path png = e.work / "c9_roundtrip.png";
    ok = ok && export_png(imgs[0].image, st, png.string()).clamped == 0;
    ok = ok && fs::exists(png);
  }

  const double secs = elapsed(t0);
  return report(9, ok && secs < 10.0, "round-trip and format suites",
                "idx, model, normalize/export", secs);
}

// ---------------------------------------------------------------- c10

bool criterion_10(const Env& e) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = base_attack_config(e);
  cfg.technique = "locsearch";
  cfg.n_images = 25;
  cfg.seed = 1010;
  cfg.save_pairs = 2;

  cfg.out_dir = (e.work / "c10_a").string();
  run_experiment(cfg);
  cfg.out_dir = (e.work / "c10_b").string();
  run_experiment(cfg);

  const fs::path a = e.work / "c10_a";
  const fs::path b = e.work / "c10_b";
  bool ok = strip_time_column(slurp(a / "metrics.csv")) ==
            strip_time_column(slurp(b / "metrics.csv"));
  ok = ok && !slurp(a / "transcript.jsonl").empty();
  ok = ok && slurp(a / "transcript.jsonl") == slurp(b / "transcript.jsonl");
  ok = ok && slurp(a / "manifest.txt") == slurp(b / "manifest.txt");
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() == ".png") {
      ok = ok && slurp(entry.path()) == slurp(b / entry.path().filename());
    }
  }
  const double secs = elapsed(t0);
  return report(10, ok, "attack determinism", "csv/transcript/png identical",
                secs);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  int only = 0;
  bool do_setup = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--setup") {
      do_setup = true;
    } else {
      std::fprintf(stderr, "unknown argument %s\n", a.c_str());
      return 2;
    }
  }

  try {
    Env env = make_env(work);
    if (do_setup) {
      return setup(env);
    }
    if (!setup_done(env)) {
      std::printf("preparing model and dataset first...\n");
      setup(env);
    }

    bool (*criteria[])(const Env&) = {
        criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
        criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};

    bool all = true;
    if (only >= 1 && only <= 10) {
      all = criteria[only - 1](env);
    } else {
      for (int i = 0; i < 10; ++i) all = criteria[i](env) && all;
    }
    return all ? 0 : 1;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "acceptance aborted: %s\n", ex.what());
    return 2;
  }
}
