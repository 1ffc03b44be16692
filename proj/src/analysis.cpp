#include "bbadv/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace bbadv {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string fmt_opt(const std::optional<double>& v, int prec) {
  return v ? fmt(*v, prec) : std::string("--");
}

}  // namespace

ExperimentMetrics summarize(const std::vector<AttackRecord>& results, int k) {
  if (results.empty()) throw ParameterError("summarize: no results");
  ExperimentMetrics m;
  m.n_images = static_cast<int>(results.size());
  double conf_sum = 0.0, ptb_sum = 0.0, ptbpix_sum = 0.0, time_sum = 0.0;
  int base_err = 0, adv_err = 0;
  for (const auto& r : results) {
    const bool base_missed = is_k_misclassified(r.base, r.li.label, k);
    if (base_missed) ++base_err;
    if (r.outcome.success) {
      ++adv_err;
      ++m.n_success;
      const Image& adv = *r.outcome.adversarial;
      if (r.outcome.adversarial_probs) {
        const auto& p = r.outcome.adversarial_probs->probs;
        conf_sum += *std::max_element(p.begin(), p.end());
      }
      ptb_sum += l1_per_coordinate(r.li.image, adv);
      ptbpix_sum += 100.0 *
                    static_cast<double>(diff_pixels(r.li.image, adv).size()) /
                    (static_cast<double>(adv.width()) * adv.height());
      time_sum += r.outcome.wall_time_sec;
    } else if (base_missed) {
      ++adv_err;  // failures keep the original image
    }
  }
  m.err_top_k_base = 100.0 * base_err / m.n_images;
  m.err_top_k_adv = 100.0 * adv_err / m.n_images;
  if (m.n_success > 0) {
    m.conf = conf_sum / m.n_success;
    m.ptb = ptb_sum / m.n_success;
    m.ptbpixels = ptbpix_sum / m.n_success;
    m.time_sec = time_sum / m.n_success;
  }
  return m;
}

Volume fd_gradient(OracleSession& session, const Image& img, int label,
                   double step) {
  if (step <= 0.0) throw ParameterError("fd_gradient: step must be > 0");
  if (label < 1 || label > session.class_count()) {
    throw ParameterError("fd_gradient: label outside [1..C]");
  }
  Volume grad(img.channels(), img.width(), img.height());
  for (int b = 1; b <= img.channels(); ++b) {
    for (int x = 1; x <= img.width(); ++x) {
      for (int y = 1; y <= img.height(); ++y) {
        const float v = img.at(b, x, y);
        const float vp = static_cast<float>(v + step);
        const float vm = static_cast<float>(v - step);
        Image up = img;
        up.set(b, x, y, vp);
        Image dn = img;
        dn.set(b, x, y, vm);
        const double fp = session.query(up).probs[label - 1];
        const double fm = session.query(dn).probs[label - 1];
        // divide by the step float32 actually realized
        const double denom = static_cast<double>(vp) - static_cast<double>(vm);
        grad.at(b - 1, x - 1, y - 1) = (fp - fm) / denom;
      }
    }
  }
  return grad;
}

SaliencyMap saliency_map(const Volume& grad) {
  SaliencyMap m;
  m.width = grad.w;
  m.height = grad.h;
  m.score.assign(static_cast<std::size_t>(grad.w) * grad.h, 0.0);
  for (int x = 0; x < grad.w; ++x) {
    for (int y = 0; y < grad.h; ++y) {
      double best = 0.0;
      for (int c = 0; c < grad.c; ++c) {
        best = std::max(best, std::abs(grad.at(c, x, y)));
      }
      m.score[static_cast<std::size_t>(x) * grad.h + y] = best;
    }
  }
  return m;
}

double proportion_z(double overlap, double expected_fraction, int n) {
  if (n < 1 || expected_fraction <= 0.0 || expected_fraction >= 1.0) {
    throw ParameterError("proportion_z: bad parameters");
  }
  return (overlap - expected_fraction) /
         std::sqrt(expected_fraction * (1.0 - expected_fraction) / n);
}

OverlapStat overlap_stat(std::span<const PixelLoc> perturbed,
                         const SaliencyMap& map, double top_fraction) {
  if (perturbed.empty()) {
    throw ParameterError("overlap_stat: empty perturbed set");
  }
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) {
    throw ParameterError("overlap_stat: top_fraction outside (0,1)");
  }
  const std::size_t n_pix = map.score.size();
  const auto top_n = static_cast<std::size_t>(
      std::ceil(top_fraction * static_cast<double>(n_pix)));
  std::vector<std::size_t> order(n_pix);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (map.score[a] != map.score[b]) return map.score[a] > map.score[b];
    return a < b;  // (x, y) order on equal scores
  });
  std::vector<char> in_top(n_pix, 0);
  for (std::size_t i = 0; i < top_n && i < n_pix; ++i) in_top[order[i]] = 1;

  std::size_t hits = 0;
  for (const PixelLoc& l : perturbed) {
    if (l.x < 1 || l.x > map.width || l.y < 1 || l.y > map.height) {
      throw ParameterError("overlap_stat: pixel outside the map");
    }
    if (in_top[static_cast<std::size_t>(l.x - 1) * map.height + (l.y - 1)]) {
      ++hits;
    }
  }
  OverlapStat st;
  st.overlap = static_cast<double>(hits) / static_cast<double>(perturbed.size());
  st.z = proportion_z(st.overlap, top_fraction,
                      static_cast<int>(perturbed.size()));
  return st;
}

FgsmResult fgsm(const Model& model, const LabeledImage& li, double eps) {
  if (eps < 0.0) throw ParameterError("fgsm: eps must be >= 0");
  const auto start = Clock::now();
  const Image& img = li.image;
  const Bounds bounds = img.bounds();
  FgsmResult res;
  res.tried_labels = model.class_count();
  for (int a = 1; a <= model.class_count(); ++a) {
    const Volume g = model.loss_input_gradient(img, a);
    Image cand = img;
    for (int b = 1; b <= img.channels(); ++b) {
      for (int x = 1; x <= img.width(); ++x) {
        for (int y = 1; y <= img.height(); ++y) {
          const double gv = g.at(b - 1, x - 1, y - 1);
          const double sign = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
          const double v = img.at(b, x, y) + eps * sign;
          cand.set(b, x, y, static_cast<float>(std::clamp(
                                v, static_cast<double>(bounds.lb),
                                static_cast<double>(bounds.ub))));
        }
      }
    }
    const ProbVector pv = model.forward(cand);
    if (is_k_misclassified(pv, li.label, 1)) {
      res.succeeded_labels.push_back(a);
      if (!res.adversarial) {
        res.adversarial = std::move(cand);
        res.adversarial_probs = pv;
        res.successful_label = a;
      }
    }
  }
  res.wall_time_sec = std::chrono::duration<double>(Clock::now() - start).count();
  return res;
}

std::string metrics_csv_header(int k) {
  const std::string kk = std::to_string(k);
  return "ErrTop-" + kk + ",ErrTop-" + kk +
         "(Adv),conf,ptb,ptbpixels,time,technique,network";
}

std::string metrics_csv_row(const MetricsRow& row) {
  const ExperimentMetrics& m = row.metrics;
  std::ostringstream os;
  os << fmt(m.err_top_k_base, 2) << "," << fmt(m.err_top_k_adv, 2) << ","
     << fmt_opt(m.conf, 2) << "," << fmt_opt(m.ptb, 4) << ","
     << fmt_opt(m.ptbpixels, 2) << "," << fmt_opt(m.time_sec, 3) << ","
     << row.technique << "," << row.network;
  return os.str();
}

std::string metrics_text_table(std::span<const MetricsRow> rows, int k) {
  std::vector<std::vector<std::string>> cells;
  {
    std::vector<std::string> head;
    std::istringstream hs(metrics_csv_header(k));
    std::string col;
    while (std::getline(hs, col, ',')) head.push_back(col);
    cells.push_back(std::move(head));
  }
  for (const auto& r : rows) {
    std::vector<std::string> line;
    std::istringstream rs(metrics_csv_row(r));
    std::string col;
    while (std::getline(rs, col, ',')) line.push_back(col);
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> widths;
  for (const auto& line : cells) {
    widths.resize(std::max(widths.size(), line.size()), 0);
    for (std::size_t i = 0; i < line.size(); ++i) {
      widths[i] = std::max(widths[i], line[i].size());
    }
  }
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      os << std::left << std::setw(static_cast<int>(widths[i]) + 2) << line[i];
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace bbadv
