#include "bbadv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bbadv {

ProbVector OracleSession::query(const Image& img) {
  if (auto want = oracle_->input_shape(); want && *want != img.shape()) {
    throw ShapeError("oracle expects " + std::to_string(want->channels) + "x" +
                     std::to_string(want->width) + "x" +
                     std::to_string(want->height) + ", got " +
                     std::to_string(img.channels()) + "x" +
                     std::to_string(img.width()) + "x" +
                     std::to_string(img.height()));
  }
  ProbVector p = oracle_->predict(img);
  ++count_;  // the oracle has been evaluated, whatever it returned
  if (p.size() != oracle_->class_count()) {
    throw ProtocolError("oracle returned " + std::to_string(p.size()) +
                        " probabilities, expected " +
                        std::to_string(oracle_->class_count()));
  }
  double sum = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ProtocolError("oracle probability " + std::to_string(v) +
                          " outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    throw ProtocolError("oracle probabilities sum to " + std::to_string(sum));
  }
  return p;
}

std::vector<int> top_k(const ProbVector& p, int k) {
  const int c = p.size();
  if (k < 1 || k > c) {
    throw ParameterError("top_k: k=" + std::to_string(k) +
                         " outside [1.." + std::to_string(c) + "]");
  }
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = p.probs[a - 1];
    const double pb = p.probs[b - 1];
    if (pa != pb) return pa > pb;
    return a < b;  // tie: lower label first
  });
  order.resize(k);
  return order;
}

bool is_k_misclassified(const ProbVector& p, int true_label, int k) {
  if (true_label < 1 || true_label > p.size()) {
    throw ParameterError("is_k_misclassified: label " +
                         std::to_string(true_label) + " outside [1.." +
                         std::to_string(p.size()) + "]");
  }
  const auto labels = top_k(p, k);
  return std::find(labels.begin(), labels.end(), true_label) == labels.end();
}

bool is_good(OracleSession& session, const LabeledImage& li) {
  const ProbVector p = session.query(li.image);
  return top_k(p, 1)[0] == li.label;
}

}  // namespace bbadv
