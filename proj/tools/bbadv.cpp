// Command-line front end: dataset synthesis, toy-model training, attack
// runs, parameter sweeps and report formatting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bbadv/dataset.hpp"
#include "bbadv/nn.hpp"
#include "bbadv/runner.hpp"

namespace fs = std::filesystem;
using namespace bbadv;

namespace {

void write_file(const std::string& path, const std::vector<std::uint8_t>& b) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
}

int cmd_synth(const std::string& out_dir, int train_count, int test_count,
              std::uint64_t seed) {
  fs::create_directories(out_dir);
  const RawDataset train = make_synth_digits(train_count, seed, "train");
  const RawDataset test = make_synth_digits(test_count, mix64(seed), "test");
  const fs::path dir(out_dir);
  write_file((dir / "train-images.idx").string(), write_idx_images(train));
  write_file((dir / "train-labels.idx").string(), write_idx_labels(train));
  write_file((dir / "test-images.idx").string(), write_idx_images(test));
  write_file((dir / "test-labels.idx").string(), write_idx_labels(test));
  std::cout << "wrote " << train_count << " train / " << test_count
            << " test synthetic digit images to " << out_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string train_images, train_labels, test_images, test_labels;
  std::string arch = "conv";
  std::string out = "model.bin";
  double lr = 0.1;
  int epochs = 8;
  int batch = 32;
  std::uint64_t seed = 1;
  int limit_train = 0;
  int limit_test = 0;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  RawDataset raw_train = load_idx_files(a.train_images, a.train_labels,
                                        "train");
  if (a.limit_train > 0 && a.limit_train < raw_train.count()) {
    raw_train.labels.resize(a.limit_train);
    raw_train.pixels.resize(static_cast<std::size_t>(a.limit_train) *
                            raw_train.rows * raw_train.cols);
  }
  const NormStats stats = fit_norm_stats(raw_train);
  std::vector<LabeledImage> train = normalize(raw_train, stats);

  std::vector<LabeledImage> test;
  if (!a.test_images.empty()) {
    RawDataset raw_test = load_idx_files(a.test_images, a.test_labels, "test");
    if (a.limit_test > 0 && a.limit_test < raw_test.count()) {
      raw_test.labels.resize(a.limit_test);
      raw_test.pixels.resize(static_cast<std::size_t>(a.limit_test) *
                             raw_test.rows * raw_test.cols);
    }
    test = normalize(raw_test, stats);
  }

  int classes = raw_train.class_count;
  for (const auto& li : test) classes = std::max(classes, li.label);
  const ImageShape input{1, raw_train.cols, raw_train.rows};
  Model model = make_model(arch_from_string(a.arch), input, classes, a.seed);

  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  tc.verbose = a.verbose;
  const TrainReport report = train_sgd(model, train, test, tc);

  model.save(a.out);
  save_norm_stats(stats, a.out + ".norm");
  {
    std::ofstream d(a.out + ".txt", std::ios::trunc);
    d << model.describe();
  }

  std::cout << model.describe();
  std::printf("train accuracy %.2f%% (%zu images)\n",
              100.0 * report.train_accuracy, train.size());
  if (report.test_accuracy) {
    std::printf("test accuracy  %.2f%% (%zu images)\n",
                100.0 * *report.test_accuracy, test.size());
  }
  std::cout << "model saved to " << a.out << " (stats: " << a.out
            << ".norm)\n";
  return 0;
}

void print_run(const ExperimentOutput& out, int k) {
  const MetricsRow rows[] = {out.row};
  std::cout << metrics_text_table(rows, k);
  std::printf("images attacked %d (scanned %d), successes %d\n",
              out.metrics.n_images, out.scanned, out.metrics.n_success);
  if (!out.csv_path.empty()) {
    std::cout << "metrics:    " << out.csv_path << "\n"
              << "transcript: " << out.transcript_path << "\n"
              << "manifest:   " << out.manifest_path << "\n";
  }
}

int cmd_report(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw IoError("cannot open " + csv_path);
  std::vector<std::vector<std::string>> cells;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) row.push_back(col);
    if (!row.empty()) cells.push_back(std::move(row));
  }
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::cout << std::string(2, ' ')
                << row[i]
                << std::string(widths[i] - row[i].size(), ' ');
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"black-box adversarial perturbation toolkit"};
  app.require_subcommand(1);

  // --- synth ---
  std::string synth_dir = "data";
  int synth_train = 10000, synth_test = 2000;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic digit dataset as IDX files");
  synth->add_option("--out-dir", synth_dir, "output directory");
  synth->add_option("--train-count", synth_train, "training images");
  synth->add_option("--test-count", synth_test, "test images");
  synth->add_option("--seed", synth_seed, "generator seed");

  // --- train ---
  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the toy model on IDX data");
  train->add_option("--train-images", ta.train_images)->required();
  train->add_option("--train-labels", ta.train_labels)->required();
  train->add_option("--test-images", ta.test_images);
  train->add_option("--test-labels", ta.test_labels);
  train->add_option("--arch", ta.arch, "linear|conv|conv2|convbn");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--lr", ta.lr, "learning rate");
  train->add_option("--batch", ta.batch, "minibatch size");
  train->add_option("--seed", ta.seed);
  train->add_option("--limit-train", ta.limit_train, "cap training images");
  train->add_option("--limit-test", ta.limit_test, "cap test images");
  train->add_option("--out", ta.out, "model output path");
  train->add_flag("--verbose", ta.verbose, "per-epoch loss");

  // --- attack ---
  ExperimentConfig ec;
  auto* attack = app.add_subcommand("attack", "run an attack over test images");
  attack->set_config("--config", "", "key=value config file; flags override");
  attack->add_option("--model", ec.model_path)->required();
  attack->add_option("--images", ec.images_path)->required();
  attack->add_option("--labels", ec.labels_path)->required();
  attack->add_option("--stats", ec.norm_stats_path,
                     "norm stats path (default <model>.norm)");
  attack->add_option("--technique", ec.technique, "locsearch|randadv|fgsm");
  attack->add_option("--dataset-name", ec.dataset_name);
  attack->add_option("--network-name", ec.network_name);
  attack->add_option("--n", ec.n_images, "good images to attack");
  attack->add_option("--k", ec.k, "misclassification threshold");
  attack->add_option("--seed", ec.seed);
  attack->add_option("--save-pairs", ec.save_pairs,
                     "PNG pairs for the first M successes");
  attack->add_option("--workers", ec.workers, "parallel attack workers");
  attack->add_option("--out-dir", ec.out_dir)->required();
  // local search
  attack->add_option("--p0", ec.ls.p0, "initial scoring perturbation");
  attack->add_option("--r", ec.ls.r, "cyclic factor in [0,2]");
  attack->add_option("--t", ec.ls.t, "pixels perturbed per round");
  attack->add_option("--d", ec.ls.d, "neighborhood half side");
  attack->add_option("--rounds", ec.ls.rounds_cap, "round cap R");
  attack->add_option("--init-fraction", ec.ls.init_fraction);
  attack->add_option("--exclusion", ec.ls.exclusion_window);
  attack->add_option("--p-low", ec.ls.p_low);
  attack->add_option("--p-high", ec.ls.p_high);
  attack->add_option("--p-step", ec.ls.p_step);
  // randadv
  attack->add_option("--p", ec.ra.p, "Pert magnitude");
  attack->add_option("--budget", ec.ra.trial_budget,
                     "trials per image (0 = default)");
  attack->add_option("--set-size", ec.ra.set_size, "pixels per trial");
  // fgsm
  attack->add_option("--eps", ec.fgsm_eps, "FGSM step");

  // --- sweep ---
  std::string sweep_param = "p";
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand(
      "sweep", "run an attack per parameter value (p: randadv, k: locsearch)");
  sweep->add_option("--param", sweep_param, "p|k");
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--model", ec.model_path);
  sweep->add_option("--images", ec.images_path);
  sweep->add_option("--labels", ec.labels_path);
  sweep->add_option("--stats", ec.norm_stats_path);
  sweep->add_option("--dataset-name", ec.dataset_name);
  sweep->add_option("--network-name", ec.network_name);
  sweep->add_option("--n", ec.n_images);
  sweep->add_option("--seed", ec.seed);
  sweep->add_option("--workers", ec.workers);
  sweep->add_option("--out-dir", ec.out_dir);
  sweep->add_option("--budget", ec.ra.trial_budget);
  sweep->add_option("--set-size", ec.ra.set_size);

  // --- report ---
  std::string report_csv;
  auto* report = app.add_subcommand("report", "print a CSV as aligned text");
  report->add_option("--csv", report_csv)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_dir, synth_train, synth_test, synth_seed);
    }
    if (train->parsed()) {
      if (ta.test_images.empty() != ta.test_labels.empty()) {
        throw ParameterError("--test-images and --test-labels go together");
      }
      return cmd_train(ta);
    }
    if (attack->parsed()) {
      const ExperimentOutput out = run_experiment(ec);
      print_run(out, out.row.k);
      return 0;
    }
    if (sweep->parsed()) {
      if (sweep_param != "p" && sweep_param != "k") {
        throw ParameterError("--param must be p or k");
      }
      if (ec.model_path.empty() || ec.images_path.empty() ||
          ec.labels_path.empty() || ec.out_dir.empty()) {
        throw ParameterError("sweep needs --model, --images, --labels, "
                             "--out-dir");
      }
      fs::create_directories(ec.out_dir);
      std::ostringstream csv;
      bool header_done = false;
      for (double value : sweep_values) {
        ExperimentConfig run = ec;
        std::ostringstream vs;
        vs << value;
        run.out_dir = (fs::path(ec.out_dir) /
                       ("sweep_" + sweep_param + "_" + vs.str()))
                          .string();
        if (sweep_param == "p") {
          run.technique = "randadv";
          run.ra.p = value;
        } else {
          run.technique = "locsearch";
          run.k = static_cast<int>(value);
        }
        const ExperimentOutput out = run_experiment(run);
        double crit_sum = 0.0;
        int crit_n = 0;
        for (const auto& rec : out.records) {
          if (rec.outcome.critical_fraction) {
            crit_sum += *rec.outcome.critical_fraction;
            ++crit_n;
          }
        }
        if (!header_done) {
          csv << "param,value," << metrics_csv_header(out.row.k)
              << ",mean_critical_fraction\n";
          header_done = true;
        }
        csv << sweep_param << "," << vs.str() << ","
            << metrics_csv_row(out.row) << ",";
        if (crit_n > 0) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.4f", crit_sum / crit_n);
          csv << buf;
        } else {
          csv << "--";
        }
        csv << "\n";
        print_run(out, out.row.k);
      }
      const std::string sweep_csv =
          (fs::path(ec.out_dir) / "sweep.csv").string();
      std::ofstream f(sweep_csv, std::ios::trunc);
      f << csv.str();
      std::cout << "sweep summary: " << sweep_csv << "\n";
      return 0;
    }
    if (report->parsed()) {
      return cmd_report(report_csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
