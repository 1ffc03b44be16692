#include "bbadv/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "bbadv/perturb.hpp"
#include "bbadv/rng.hpp"

namespace bbadv {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

PixelLoc loc_from_index(std::uint32_t idx, int height) {
  return {static_cast<int>(idx) / height + 1,
          static_cast<int>(idx) % height + 1};
}

nlohmann::ordered_json loc_list(std::span<const PixelLoc> locs) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& l : locs) a.push_back({l.x, l.y});
  return a;
}

}  // namespace

void Transcript::write_jsonl(std::ostream& os) const {
  for (const auto& r : records_) os << r.dump() << "\n";
}

AttackOutcome rand_adv(OracleSession& session, const LabeledImage& li,
                       const RandAdvConfig& cfg, Transcript* transcript) {
  const Image& img = li.image;
  const int n_pixels = img.width() * img.height();
  if (cfg.trial_budget < 1) {
    throw ParameterError("rand_adv: trial budget must be >= 1");
  }
  if (cfg.set_size < 1 || cfg.set_size > n_pixels) {
    throw ParameterError("rand_adv: set_size outside [1.." +
                         std::to_string(n_pixels) + "]");
  }
  if (li.label < 1 || li.label > session.class_count()) {
    throw ParameterError("rand_adv: label outside [1..C]");
  }

  const auto start = Clock::now();
  const std::uint64_t q0 = session.query_count();
  Rng rng(cfg.seed);

  AttackOutcome out;
  int critical = 0;
  std::vector<PixelLoc> locs(cfg.set_size);
  for (int trial = 1; trial <= cfg.trial_budget; ++trial) {
    const auto idxs = rng.sample_without_replacement(
        static_cast<std::uint32_t>(n_pixels),
        static_cast<std::uint32_t>(cfg.set_size));
    for (int j = 0; j < cfg.set_size; ++j) {
      locs[j] = loc_from_index(idxs[j], img.height());
    }
    Image probe = pert_set(img, cfg.p, locs);
    const ProbVector pv = session.query(probe);
    if (is_k_misclassified(pv, li.label, 1)) {
      ++critical;
      if (!out.adversarial) {
        out.adversarial = std::move(probe);
        out.adversarial_valid = validate(*out.adversarial);
        out.adversarial_probs = pv;
        out.perturbed_pixels = locs;
        std::sort(out.perturbed_pixels.begin(), out.perturbed_pixels.end());
      }
      if (transcript) {
        transcript->add({{"trial", trial},
                         {"locations", loc_list(locs)},
                         {"critical", true}});
      }
    }
  }

  out.success = critical > 0;
  out.rounds_used = cfg.trial_budget;
  out.queries_used = session.query_count() - q0;
  out.critical_fraction =
      static_cast<double>(critical) / static_cast<double>(cfg.trial_budget);
  out.wall_time_sec = seconds_since(start);
  if (transcript) {
    transcript->add({{"summary", true},
                     {"trials", cfg.trial_budget},
                     {"critical", critical},
                     {"fraction", *out.critical_fraction}});
  }
  return out;
}

std::vector<PixelLoc> neighborhood(std::span<const PixelLoc> prev, int d,
                                   int width, int height) {
  if (prev.empty()) throw ParameterError("neighborhood: empty pixel set");
  if (d < 0) throw ParameterError("neighborhood: d must be >= 0");
  std::set<PixelLoc> out;
  for (const auto& c : prev) {
    const int x0 = std::max(1, c.x - d);
    const int x1 = std::min(width, c.x + d);
    const int y0 = std::max(1, c.y - d);
    const int y1 = std::min(height, c.y + d);
    for (int x = x0; x <= x1; ++x) {
      for (int y = y0; y <= y1; ++y) out.insert({x, y});
    }
  }
  return {out.begin(), out.end()};
}

AttackOutcome loc_search_adv(OracleSession& session, const LabeledImage& li,
                             const LocSearchConfig& cfg,
                             Transcript* transcript) {
  const Image& img = li.image;
  if (!(cfg.r >= 0.0 && cfg.r <= 2.0)) {
    throw ParameterError("loc_search_adv: r outside [0,2]");
  }
  if (cfg.t < 1 || cfg.d < 0 || cfg.rounds_cap < 1 ||
      cfg.exclusion_window < 0) {
    throw ParameterError("loc_search_adv: bad search parameters");
  }
  if (!(cfg.init_fraction > 0.0 && cfg.init_fraction <= 1.0)) {
    throw ParameterError("loc_search_adv: init_fraction outside (0,1]");
  }
  if (cfg.k < 1 || cfg.k > session.class_count()) {
    throw ParameterError("loc_search_adv: k outside [1..C]");
  }
  if (li.label < 1 || li.label > session.class_count()) {
    throw ParameterError("loc_search_adv: label outside [1..C]");
  }
  if (!validate(img)) {
    throw ParameterError("loc_search_adv: input image violates its bounds");
  }

  const auto start = Clock::now();
  const std::uint64_t q0 = session.query_count();
  const int w = img.width();
  const int h = img.height();
  const int n_pixels = w * h;
  Rng rng(cfg.seed);

  // initial candidate set: init_fraction of all pixel locations, no repeats
  const int m = std::max(
      1, static_cast<int>(std::ceil(cfg.init_fraction * n_pixels)));
  std::vector<PixelLoc> candidates;
  candidates.reserve(m);
  for (std::uint32_t idx : rng.sample_without_replacement(
           static_cast<std::uint32_t>(n_pixels), static_cast<std::uint32_t>(m))) {
    candidates.push_back(loc_from_index(idx, h));
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<int> last_selected(static_cast<std::size_t>(n_pixels), 0);
  const auto flat = [h](PixelLoc l) {
    return static_cast<std::size_t>(l.x - 1) * h + (l.y - 1);
  };

  std::set<PixelLoc> all_perturbed;
  Image cur = img;
  double p = cfg.p0;
  AttackOutcome out;

  for (int round = 1; round <= cfg.rounds_cap; ++round) {
    out.rounds_used = round;

    // score every candidate with a Pert probe
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const ProbVector pv = session.query(pert(cur, p, candidates[i]));
      scores[i] = pv.probs[li.label - 1];
    }

    // rank by how hard the probe dents the true-class score (ascending
    // f value), ties in (x, y) order, then take the first t whose pixels
    // are not under exclusion
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] < scores[b];
      return candidates[a] < candidates[b];
    });
    std::vector<PixelLoc> selected;
    std::vector<double> selected_scores;
    for (std::size_t oi : order) {
      if (static_cast<int>(selected.size()) == cfg.t) break;
      const PixelLoc loc = candidates[oi];
      const int last = last_selected[flat(loc)];
      if (last != 0 && round - last <= cfg.exclusion_window) continue;
      selected.push_back(loc);
      selected_scores.push_back(scores[oi]);
    }

    // cyclic update on every channel of the selected pixels
    Image next = cur;
    for (const PixelLoc& loc : selected) {
      for (int b = 1; b <= img.channels(); ++b) {
        next.set(b, loc.x, loc.y,
                 static_cast<float>(
                     cyclic(cfg.r, cur.at(b, loc.x, loc.y), img.bounds())));
      }
      last_selected[flat(loc)] = round;
      all_perturbed.insert(loc);
    }
    if (!validate(next)) {
      throw NumericError("loc_search_adv: cyclic update left image bounds");
    }

    const ProbVector pv = session.query(next);
    const bool hit = is_k_misclassified(pv, li.label, cfg.k);

    const double p_used = p;
    double o_bar = std::numeric_limits<double>::quiet_NaN();
    if (!selected_scores.empty()) {
      o_bar = std::accumulate(selected_scores.begin(), selected_scores.end(),
                              0.0) /
              static_cast<double>(selected_scores.size());
      if (o_bar > cfg.p_high) {
        p = std::min(p * cfg.p_step, cfg.p_max);
      } else if (o_bar < cfg.p_low) {
        p = std::max(p / cfg.p_step, cfg.p_min);
      }
    }

    if (transcript) {
      nlohmann::ordered_json rec{
          {"round", round},
          {"p", p_used},
          {"candidates", candidates.size()},
          {"queries", candidates.size() + 1},
          {"selected", loc_list(selected)},
          {"o_bar", std::isnan(o_bar) ? nlohmann::ordered_json()
                                      : nlohmann::ordered_json(o_bar)},
          {"top_k", top_k(pv, cfg.k)},
          {"f_true", pv.probs[li.label - 1]},
          {"misclassified", hit}};
      transcript->add(std::move(rec));
    }

    cur = std::move(next);
    if (hit) {
      out.success = true;
      out.adversarial = cur;
      out.adversarial_valid = true;
      out.adversarial_probs = pv;
      break;
    }

    // next round's neighborhood comes from this round's perturbed pixels;
    // if exclusion blocked everything, keep probing the current set
    if (!selected.empty()) {
      candidates = neighborhood(selected, cfg.d, w, h);
    }
  }

  out.perturbed_pixels.assign(all_perturbed.begin(), all_perturbed.end());
  out.queries_used = session.query_count() - q0;
  out.wall_time_sec = seconds_since(start);
  return out;
}

}  // namespace bbadv
