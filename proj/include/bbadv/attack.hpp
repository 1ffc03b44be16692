#ifndef BBADV_ATTACK_HPP
#define BBADV_ATTACK_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "bbadv/image.hpp"
#include "bbadv/oracle.hpp"

namespace bbadv {

/// Append-only structured attack log: one JSON object per round (or trial),
/// written as line-delimited text for post-hoc audits.
class Transcript {
 public:
  void add(nlohmann::ordered_json rec) { records_.push_back(std::move(rec)); }
  const std::vector<nlohmann::ordered_json>& records() const {
    return records_;
  }
  void write_jsonl(std::ostream& os) const;

 private:
  std::vector<nlohmann::ordered_json> records_;
};

struct RandAdvConfig {
  double p = 100.0;
  int trial_budget = 100;  // U
  int set_size = 1;        // 1 = single pixel; 50 for high-resolution images
  std::uint64_t seed = 1;
};

struct LocSearchConfig {
  double p0 = 1.0;   // initial scoring perturbation; adapted during search
  double r = 1.5;
  int t = 5;              // pixels perturbed per round
  int d = 5;              // neighborhood half side
  int k = 1;              // misclassification threshold
  int rounds_cap = 150;   // R
  double init_fraction = 0.10;
  int exclusion_window = 30;  // rounds a perturbed pixel stays banned
  double p_low = 0.3;   // divide p by p_step when mean score drops below
  double p_high = 0.9;  // multiply p by p_step when mean score exceeds
  double p_step = 2.0;
  double p_min = 0.1;
  double p_max = 1000.0;
  std::uint64_t seed = 1;
};

struct AttackOutcome {
  bool success = false;
  std::optional<Image> adversarial;
  bool adversarial_valid = false;  // RandAdv output may leave [lb, ub]
  std::optional<ProbVector> adversarial_probs;
  int rounds_used = 0;
  std::uint64_t queries_used = 0;
  std::vector<PixelLoc> perturbed_pixels;  // sorted, unique
  std::optional<double> critical_fraction;  // RandAdv only: hits / U
  double wall_time_sec = 0.0;
};

/// Random pixel(-set) probing: U independent trials, each perturbing a
/// fresh random set of set_size distinct pixels with Pert and counting the
/// trials whose image the oracle top-1 misclassifies. The caller is
/// expected to have verified the image is good; the trials always run to
/// the full budget so the returned fraction stays an unbiased estimate.
AttackOutcome rand_adv(OracleSession& session, const LabeledImage& li,
                       const RandAdvConfig& cfg,
                       Transcript* transcript = nullptr);

/// Union of the (2d+1)-sided squares centered on prev, clipped to the
/// image, deduplicated, in (x, y) order.
std::vector<PixelLoc> neighborhood(std::span<const PixelLoc> prev, int d,
                                   int width, int height);

/// Greedy local search: each round scores every candidate location by
/// querying Pert probes, perturbs the best t eligible pixels with the
/// cyclic update (so intermediates always stay valid), and stops as soon
/// as the true label leaves the top-k. Queries per round are exactly
/// |candidates| + 1.
AttackOutcome loc_search_adv(OracleSession& session, const LabeledImage& li,
                             const LocSearchConfig& cfg,
                             Transcript* transcript = nullptr);

}  // namespace bbadv

#endif
