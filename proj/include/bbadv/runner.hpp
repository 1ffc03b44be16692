#ifndef BBADV_RUNNER_HPP
#define BBADV_RUNNER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bbadv/analysis.hpp"
#include "bbadv/attack.hpp"
#include "bbadv/dataset.hpp"
#include "bbadv/nn.hpp"

namespace bbadv {

/// Everything one experiment run needs: data/model sources, the attack and
/// its parameters, and output locations. A run is fully determined by this
/// struct (timing aside).
struct ExperimentConfig {
  std::string model_path;
  std::string norm_stats_path;  // empty: model_path + ".norm"
  std::string images_path;
  std::string labels_path;
  std::string dataset_name = "dataset";
  std::string network_name = "toy";
  std::string technique = "locsearch";  // locsearch | randadv | fgsm

  LocSearchConfig ls;
  RandAdvConfig ra;  // ra.trial_budget <= 0 picks the per-image default
  double fgsm_eps = 0.2;

  int k = 1;
  int n_images = 100;
  std::uint64_t seed = 1;
  int save_pairs = 0;  // PNG pairs for the first M successes
  int workers = 1;
  std::string out_dir;  // empty: no files written
};

struct ExperimentOutput {
  std::vector<AttackRecord> records;  // deterministic image order
  std::vector<int> dataset_indices;
  ExperimentMetrics metrics;
  MetricsRow row;
  std::vector<Transcript> transcripts;
  int scanned = 0;  // test images consumed while looking for good ones
  std::string csv_path;
  std::string transcript_path;
  std::string manifest_path;
};

/// Derives the per-image attack seed from the run seed; exposed so audits
/// can replay single images.
std::uint64_t per_image_seed(std::uint64_t run_seed, int image_index);

/// Default RandAdv budget: half the pixel count for single-pixel probing,
/// 5000 trials for pixel-set probing.
int default_randadv_budget(int width, int height, int set_size);

std::uint64_t fnv1a64(const std::string& path);

/// Select n good test images (seed-deterministic), run the configured
/// attack on each, and write metrics CSV, JSONL transcript, manifest and
/// PNG pairs under out_dir.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

}  // namespace bbadv

#endif
