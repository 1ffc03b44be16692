#ifndef BBADV_ORACLE_HPP
#define BBADV_ORACLE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "bbadv/image.hpp"

namespace bbadv {

/// Output of one classifier query: a probability per class, 1-based labels.
struct ProbVector {
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
};

/// Max allowed deviation of sum(probs) from 1. Vectors outside it are
/// rejected as protocol errors, never silently renormalized.
inline constexpr double kProbSumTolerance = 1e-5;

/// The black-box classifier contract. Implementations must be deterministic
/// for a fixed input and read-only while under attack. External classifiers
/// plug in by implementing this interface in-process.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual int class_count() const = 0;

  /// Expected input shape; nullopt means any shape is accepted.
  virtual std::optional<ImageShape> input_shape() const { return std::nullopt; }

  virtual ProbVector predict(const Image& img) const = 0;
};

/// Wraps an oracle with exact query accounting. One session per running
/// attack; the count only ever moves forward, by one per query.
class OracleSession {
 public:
  explicit OracleSession(const Oracle& oracle) : oracle_(&oracle) {}

  /// Forward one image. Throws ShapeError before the oracle is consulted if
  /// the input shape cannot match; throws ProtocolError if the returned
  /// vector is not a length-C probability distribution.
  ProbVector query(const Image& img);

  std::uint64_t query_count() const { return count_; }
  int class_count() const { return oracle_->class_count(); }
  const Oracle& oracle() const { return *oracle_; }

 private:
  const Oracle* oracle_;
  std::uint64_t count_ = 0;
};

/// Labels of the k highest probabilities, in decreasing probability order.
/// Ties break toward the lower label index.
std::vector<int> top_k(const ProbVector& p, int k);

/// True iff the true label is absent from the top-k predictions.
bool is_k_misclassified(const ProbVector& p, int true_label, int k);

/// True iff the oracle ranks the image's own label first. Costs one query.
bool is_good(OracleSession& session, const LabeledImage& li);

}  // namespace bbadv

#endif
