#ifndef BBADV_ANALYSIS_HPP
#define BBADV_ANALYSIS_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbadv/attack.hpp"
#include "bbadv/image.hpp"
#include "bbadv/nn.hpp"
#include "bbadv/oracle.hpp"

namespace bbadv {

/// One attacked image with its pre-attack oracle output.
struct AttackRecord {
  LabeledImage li;
  ProbVector base;  // oracle output on the unperturbed image
  AttackOutcome outcome;
};

/// Table-style experiment summary. Means are taken over the successful
/// subset only and stay absent (not zero) when nothing succeeded.
struct ExperimentMetrics {
  double err_top_k_base = 0.0;  // percent over all attacked images
  double err_top_k_adv = 0.0;   // percent after substituting successes
  std::optional<double> conf;       // mean top-1 prob of adversarial images
  std::optional<double> ptb;        // mean per-coordinate L1 perturbation
  std::optional<double> ptbpixels;  // mean percent of perturbed pixels
  std::optional<double> time_sec;   // mean seconds per successful attack
  int n_images = 0;
  int n_success = 0;
};

ExperimentMetrics summarize(const std::vector<AttackRecord>& results, int k);

/// Query-only central-difference estimate of d(prob of label)/d(input).
/// Costs exactly 2 * channels * width * height queries. The divisor is the
/// effective float32 step actually applied, which keeps the truncation
/// error the only error term.
Volume fd_gradient(OracleSession& session, const Image& img, int label,
                   double step = 1e-3);

/// Per-pixel channel-max of absolute gradient values.
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> score;  // (x, y) layout: index = (x-1)*height + (y-1)

  double at(int x, int y) const {
    return score[static_cast<std::size_t>(x - 1) * height + (y - 1)];
  }
};

SaliencyMap saliency_map(const Volume& grad);

/// One-proportion z statistic for an observed overlap fraction against an
/// expected fraction over n trials.
double proportion_z(double overlap, double expected_fraction, int n);

struct OverlapStat {
  double overlap = 0.0;
  double z = 0.0;
};

/// Overlap between the perturbed pixel set and the top fraction of the
/// saliency map (ties by (x, y) order), with its z statistic against
/// random placement.
OverlapStat overlap_stat(std::span<const PixelLoc> perturbed,
                         const SaliencyMap& map, double top_fraction = 0.10);

struct FgsmResult {
  std::optional<Image> adversarial;
  std::optional<ProbVector> adversarial_probs;
  int successful_label = 0;          // lowest label that worked; 0 if none
  int tried_labels = 0;              // always C: every label is swept
  std::vector<int> succeeded_labels;
  double wall_time_sec = 0.0;
};

/// Fast gradient sign baseline: candidate = clamp(img + eps * sign(dLoss/dI))
/// for every target label a, keeping the first (lowest-a) candidate the
/// model top-1 misclassifies. White-box: needs the model's own gradients.
FgsmResult fgsm(const Model& model, const LabeledImage& li, double eps = 0.2);

/// CSV rows in the metrics-table layout; absent means print as "--".
struct MetricsRow {
  ExperimentMetrics metrics;
  std::string technique;
  std::string network;
  int k = 1;
};

std::string metrics_csv_header(int k);
std::string metrics_csv_row(const MetricsRow& row);
std::string metrics_text_table(std::span<const MetricsRow> rows, int k);

}  // namespace bbadv

#endif
