#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aoct/types.hpp"

namespace aoct {

enum class Activation : uint8_t { softplus = 0, relu = 1 };

/// Network shape. The input (3) is re-injected at hidden layer skip_layer;
/// the layer feeding the skip emits width-3 units so the concatenation
/// [h; q] / sqrt(2) restores the full width.
struct MlpArch {
  int hidden_width = 256;
  int hidden_layers = 8;
  int skip_layer = 4;  // -1 = no skip
  Activation activation = Activation::softplus;
  double softplus_beta = 100.0;

  void validate() const;
  int layer_count() const { return hidden_layers + 1; }  // + final linear layer
  /// Output width of hidden layer l (the pre-skip layer is narrowed).
  int layer_out(int l) const;
  /// Input width of layer l (after skip concatenation where applicable).
  int layer_in(int l) const;
  int64_t parameter_count() const;
  bool operator==(const MlpArch&) const = default;
};

/// Plain MLP parameters plus the batched value/gradient engine. Real is the
/// compute precision: float for training throughput, double for the
/// finite-difference oracles and stored models.
template <typename Real>
struct MlpNet {
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

  MlpArch arch;
  std::vector<Matrix> w;  // w[l]: layer_out(l) x layer_in(l)
  std::vector<Vector> b;

  explicit MlpNet(const MlpArch& a = {});

  /// Geometric initialization: hidden layers N(0, sqrt(2)/sqrt(out)), skip
  /// columns zeroed, final layer tuned so f(q) ~ ||q|| - r0 at the start.
  void init_geometric(uint64_t seed, Real r0 = Real(0.5));

  int64_t parameter_count() const { return arch.parameter_count(); }
  /// Flat parameter view in a fixed order (w then b, per layer, column-major).
  void to_flat(std::vector<double>& out) const;
  void from_flat(const std::vector<double>& flat);

  template <typename OtherReal>
  MlpNet<OtherReal> cast() const;

  /// Single-point value; convenience wrapper over the batched path.
  Real eval(const Point3& q) const;
  /// Value and exact spatial gradient at q (forward pass carrying the
  /// input Jacobian).
  std::pair<Real, Point3> eval_with_gradient(const Point3& q) const;

  /// Values for B points, columns of q (3 x B), written to out (B).
  void eval_batch(const Matrix& q, Vector& out) const;
};

/// Gradient buffer mirroring MlpNet's parameters.
template <typename Real>
struct MlpGrad {
  std::vector<typename MlpNet<Real>::Matrix> w;
  std::vector<typename MlpNet<Real>::Vector> b;

  explicit MlpGrad(const MlpArch& arch = {});
  void set_zero();
  void add(const MlpGrad& other, Real factor = Real(1));
  void to_flat(std::vector<double>& out) const;
};

/// The pull map t' = q - s * g / ||g||. Absent when ||g|| <= eps (degenerate
/// gradient; callers skip-and-count, never epsilon-normalize).
std::optional<Point3> pull(const Point3& q, double s, const Point3& g, double eps = 1e-8);

/// Query/target pairs in unit space, columns of 3 x I matrices.
template <typename Real>
struct QueryBatch {
  typename MlpNet<Real>::Matrix q;
  typename MlpNet<Real>::Matrix t;
  int count() const { return static_cast<int>(q.cols()); }
};

struct TrainConfig {
  int steps = 10000;
  int batch_size = 512;  // queries per step (the I in the loss mean)
  double lr = 1e-3;      // initial rate, cosine-decayed to 0
  int queries_per_point = 8;
  int knn_rank = 50;  // k-th neighbor distance sets the query noise scale
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double eps_grad = 1e-8;  // degenerate-gradient threshold on ||grad f||
  uint64_t seed = 0;
  MlpArch arch;
  bool use_f64 = false;  // training precision; stored models are always f64
  int log_every = 10;

  void validate() const;
};

/// Result of pull_loss: (1/I) sum ||t' - t||^2 over the non-degenerate samples.
struct LossStats {
  double loss = 0.0;
  int skipped = 0;  // degenerate-gradient samples, excluded from sum and I
  int used = 0;
};

/// Loss and exact parameter gradient of the pull loss, including the
/// dependence of grad f(q) on the parameters. Chunked evaluation with a fixed
/// reduction order, so results do not depend on scheduling.
template <typename Real>
LossStats pull_loss(const MlpNet<Real>& net, const QueryBatch<Real>& batch, Real eps_grad,
                    MlpGrad<Real>* grad);

/// Precomputed query pool: for each cloud point p, Q Gaussian queries with
/// sigma_p = distance to p's k-th nearest neighbor, paired with the exact
/// nearest cloud point. Batches are drawn uniformly from the pool.
template <typename Real>
class QueryPool {
 public:
  QueryPool(const std::vector<Point3>& cloud, int queries_per_point, int knn_rank,
            uint64_t seed);

  size_t size() const { return queries_.size(); }
  QueryBatch<Real> draw(int batch_size, class Rng& rng) const;
  const Point3& query(size_t i) const { return queries_[i]; }
  const Point3& target(size_t i) const { return targets_[i]; }

 private:
  std::vector<Point3> queries_;
  std::vector<Point3> targets_;
};

struct TrainStep {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  int skipped = 0;
};

struct TrainResult {
  std::vector<TrainStep> log;
  int64_t total_skipped = 0;
  bool diverged = false;  // loss went non-finite; the returned model is the last finite one
  int divergence_step = -1;
};

/// Trained field: parameters in double plus the unit transform binding the
/// fitting space to mm. Immutable after training; shareable across threads.
struct MlpSdf {
  MlpNet<double> net;
  UnitTransform transform;

  double eval_unit(const Point3& q) const { return net.eval(q); }
  std::pair<double, Point3> eval_with_gradient_unit(const Point3& q) const {
    return net.eval_with_gradient(q);
  }
  /// Signed distance in mm at a mm-space point (similarity transform, so
  /// distances scale by transform.scale).
  double eval_mm(const Point3& p) const { return net.eval(transform.to_unit(p)) * transform.scale; }
};

/// Fits a field to a normalized cloud (unit space). Deterministic given
/// cfg.seed. Throws when every sample of a step is degenerate; a non-finite
/// loss stops training and returns the last finite-loss parameters with
/// result->diverged set.
MlpSdf train(const std::vector<Point3>& unit_cloud, const UnitTransform& transform,
             const TrainConfig& cfg, TrainResult* result = nullptr);

extern template struct MlpNet<float>;
extern template struct MlpNet<double>;
extern template struct MlpGrad<float>;
extern template struct MlpGrad<double>;
extern template class QueryPool<float>;
extern template class QueryPool<double>;
extern template LossStats pull_loss<float>(const MlpNet<float>&, const QueryBatch<float>&, float,
                                           MlpGrad<float>*);
extern template LossStats pull_loss<double>(const MlpNet<double>&, const QueryBatch<double>&,
                                            double, MlpGrad<double>*);

}  // namespace aoct
