#include "bbadv/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "bbadv/rng.hpp"

namespace bbadv {

namespace fs = std::filesystem;

std::uint64_t per_image_seed(std::uint64_t run_seed, int image_index) {
  return mix64(run_seed ^ mix64(static_cast<std::uint64_t>(image_index) + 1));
}

int default_randadv_budget(int width, int height, int set_size) {
  if (set_size > 1) return 5000;
  return (width * height + 1) / 2;
}

std::uint64_t fnv1a64(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string technique_label(const std::string& technique) {
  if (technique == "locsearch") return "LocSearchAdv";
  if (technique == "randadv") return "RandAdv";
  if (technique == "fgsm") return "FGSM";
  throw ParameterError("unknown technique '" + technique +
                       "' (locsearch|randadv|fgsm)");
}

AttackOutcome fgsm_outcome(const Model& model, const LabeledImage& li,
                           double eps, Transcript* transcript) {
  FgsmResult r = fgsm(model, li, eps);
  AttackOutcome out;
  out.success = r.adversarial.has_value();
  out.rounds_used = 1;
  out.queries_used = static_cast<std::uint64_t>(r.tried_labels);
  out.wall_time_sec = r.wall_time_sec;
  if (out.success) {
    out.perturbed_pixels = diff_pixels(li.image, *r.adversarial);
    out.adversarial = std::move(r.adversarial);
    out.adversarial_valid = true;
    out.adversarial_probs = std::move(r.adversarial_probs);
  }
  if (transcript) {
    transcript->add({{"labels_tried", r.tried_labels},
                     {"succeeded_labels", r.succeeded_labels},
                     {"chosen_label", r.successful_label}});
  }
  return out;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  if (cfg.n_images < 1) throw ParameterError("n_images must be >= 1");
  const std::string technique = technique_label(cfg.technique);

  const Model model = Model::load(cfg.model_path);
  const std::string stats_path =
      cfg.norm_stats_path.empty() ? cfg.model_path + ".norm"
                                  : cfg.norm_stats_path;
  const NormStats stats = load_norm_stats(stats_path);
  const RawDataset raw = load_idx_files(cfg.images_path, cfg.labels_path,
                                        "test");
  const std::vector<LabeledImage> images = normalize(raw, stats);
  if (images.empty()) throw ParameterError("empty test set");

  const ModelOracle oracle(model);

  // seed-deterministic pick of n good images
  Rng pick_rng(cfg.seed);
  std::vector<std::uint32_t> order(images.size());
  std::iota(order.begin(), order.end(), 0u);
  pick_rng.shuffle(order);

  ExperimentOutput out;
  std::vector<ProbVector> bases;
  {
    OracleSession scan(oracle);
    for (std::uint32_t idx : order) {
      if (static_cast<int>(out.dataset_indices.size()) == cfg.n_images) break;
      ++out.scanned;
      const ProbVector base = scan.query(images[idx].image);
      if (top_k(base, 1)[0] == images[idx].label) {
        out.dataset_indices.push_back(static_cast<int>(idx));
        bases.push_back(base);
      }
    }
  }
  if (out.dataset_indices.empty()) {
    throw ParameterError("no good images found in the test set");
  }
  const int n = static_cast<int>(out.dataset_indices.size());

  std::vector<std::optional<AttackRecord>> slots(n);
  out.transcripts.resize(n);
  std::vector<std::exception_ptr> errors(n);

  std::atomic<int> next{0};
  const int workers = std::max(1, cfg.workers);
  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        const LabeledImage& li = images[out.dataset_indices[i]];
        OracleSession session(oracle);
        AttackOutcome outcome;
        if (cfg.technique == "locsearch") {
          LocSearchConfig ls = cfg.ls;
          ls.k = cfg.k;
          ls.seed = per_image_seed(cfg.seed, i);
          outcome = loc_search_adv(session, li, ls, &out.transcripts[i]);
        } else if (cfg.technique == "randadv") {
          RandAdvConfig ra = cfg.ra;
          if (ra.trial_budget <= 0) {
            ra.trial_budget = default_randadv_budget(
                li.image.width(), li.image.height(), ra.set_size);
          }
          ra.seed = per_image_seed(cfg.seed, i);
          outcome = rand_adv(session, li, ra, &out.transcripts[i]);
        } else {
          outcome = fgsm_outcome(model, li, cfg.fgsm_eps, &out.transcripts[i]);
        }
        slots[i] = AttackRecord{li, bases[i], std::move(outcome)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  out.records.reserve(n);
  for (auto& s : slots) out.records.push_back(std::move(*s));

  const int metrics_k = cfg.technique == "locsearch" ? cfg.k : 1;
  out.metrics = summarize(out.records, metrics_k);
  out.row = MetricsRow{out.metrics, technique, cfg.network_name, metrics_k};

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);

    out.csv_path = (dir / "metrics.csv").string();
    {
      std::ofstream csv(out.csv_path, std::ios::trunc);
      if (!csv) throw IoError("cannot write " + out.csv_path);
      csv << metrics_csv_header(metrics_k) << "\n"
          << metrics_csv_row(out.row) << "\n";
    }

    out.transcript_path = (dir / "transcript.jsonl").string();
    {
      std::ofstream tr(out.transcript_path, std::ios::trunc);
      if (!tr) throw IoError("cannot write " + out.transcript_path);
      for (int i = 0; i < n; ++i) {
        const auto& rec = out.records[i];
        nlohmann::ordered_json head{
            {"image", i},
            {"dataset_index", out.dataset_indices[i]},
            {"label", rec.li.label},
            {"technique", technique},
            {"seed", per_image_seed(cfg.seed, i)}};
        tr << head.dump() << "\n";
        out.transcripts[i].write_jsonl(tr);
        nlohmann::ordered_json tail{
            {"result",
             {{"success", rec.outcome.success},
              {"rounds", rec.outcome.rounds_used},
              {"queries", rec.outcome.queries_used},
              {"perturbed_pixels",
               static_cast<int>(rec.outcome.perturbed_pixels.size())},
              {"valid", rec.outcome.adversarial_valid}}}};
        tr << tail.dump() << "\n";
      }
    }

    int saved = 0;
    for (int i = 0; i < n && saved < cfg.save_pairs; ++i) {
      const auto& rec = out.records[i];
      if (!rec.outcome.success) continue;
      const std::string tag = std::to_string(out.dataset_indices[i]);
      export_png(rec.li.image, stats,
                 (dir / ("original_" + tag + ".png")).string());
      export_png(*rec.outcome.adversarial, stats,
                 (dir / ("adversarial_" + tag + ".png")).string());
      ++saved;
    }

    out.manifest_path = (dir / "manifest.txt").string();
    {
      std::ofstream mf(out.manifest_path, std::ios::trunc);
      if (!mf) throw IoError("cannot write " + out.manifest_path);
      char hash[32];
      std::snprintf(hash, sizeof(hash), "%016llx",
                    static_cast<unsigned long long>(fnv1a64(cfg.model_path)));
      mf << "technique " << technique << "\n"
         << "dataset " << cfg.dataset_name << "\n"
         << "network " << cfg.network_name << "\n"
         << "model " << cfg.model_path << "\n"
         << "model_fnv1a64 " << hash << "\n"
         << "images " << cfg.images_path << "\n"
         << "labels " << cfg.labels_path << "\n"
         << "k " << metrics_k << "\n"
         << "n_images_requested " << cfg.n_images << "\n"
         << "n_images_attacked " << n << "\n"
         << "scanned " << out.scanned << "\n"
         << "seed " << cfg.seed << "\n"
         << "workers " << cfg.workers << "\n";
      mf << "norm_channels " << stats.channels() << "\n";
      mf.precision(17);
      for (int c = 0; c < stats.channels(); ++c) {
        mf << "norm_mean " << stats.mean[c] << "\n"
           << "norm_std " << stats.std_dev[c] << "\n";
      }
      mf << "lb " << stats.bounds.lb << "\n"
         << "ub " << stats.bounds.ub << "\n";
      if (cfg.technique == "locsearch") {
        mf << "p0 " << cfg.ls.p0 << "\nr " << cfg.ls.r << "\nt " << cfg.ls.t
           << "\nd " << cfg.ls.d << "\nrounds_cap " << cfg.ls.rounds_cap
           << "\ninit_fraction " << cfg.ls.init_fraction
           << "\nexclusion_window " << cfg.ls.exclusion_window << "\np_low "
           << cfg.ls.p_low << "\np_high " << cfg.ls.p_high << "\np_step "
           << cfg.ls.p_step << "\n";
      } else if (cfg.technique == "randadv") {
        mf << "p " << cfg.ra.p << "\ntrial_budget " << cfg.ra.trial_budget
           << "\nset_size " << cfg.ra.set_size << "\n";
      } else {
        mf << "eps " << cfg.fgsm_eps << "\n";
      }
    }
  }
  return out;
}

}  // namespace bbadv
