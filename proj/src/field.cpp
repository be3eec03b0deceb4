#include "aoct/field.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "aoct/kdtree.hpp"
#include "aoct/parallel.hpp"
#include "aoct/rng.hpp"

namespace aoct {

namespace {

constexpr int kChunk = 128;  // samples per forward/backward block
constexpr uint64_t kInitStream = 0x696e697400000000ULL;
constexpr uint64_t kPoolStream = 0x706f6f6c00000000ULL;
constexpr uint64_t kBatchStream = 0x6261746368000000ULL;

}  // namespace

void MlpArch::validate() const {
  if (hidden_width < 4) throw std::invalid_argument("MlpArch: hidden_width must be >= 4");
  if (hidden_layers < 1) throw std::invalid_argument("MlpArch: hidden_layers must be >= 1");
  if (skip_layer != -1 && (skip_layer < 1 || skip_layer >= hidden_layers))
    throw std::invalid_argument("MlpArch: skip_layer must be -1 or in [1, hidden_layers)");
  if (!(softplus_beta > 0)) throw std::invalid_argument("MlpArch: softplus_beta must be > 0");
}

int MlpArch::layer_out(int l) const {
  if (l == hidden_layers) return 1;
  if (skip_layer >= 0 && l == skip_layer - 1) return hidden_width - 3;
  return hidden_width;
}

int MlpArch::layer_in(int l) const {
  if (l == 0) return 3;
  if (l == skip_layer) return hidden_width;  // layer_out(l-1) + 3, re-widened by the skip
  return layer_out(l - 1);
}

int64_t MlpArch::parameter_count() const {
  int64_t n = 0;
  for (int l = 0; l <= hidden_layers; ++l)
    n += int64_t(layer_out(l)) * layer_in(l) + layer_out(l);
  return n;
}

template <typename Real>
MlpNet<Real>::MlpNet(const MlpArch& a) : arch(a) {
  arch.validate();
  const int layers = arch.layer_count();
  w.resize(layers);
  b.resize(layers);
  for (int l = 0; l < layers; ++l) {
    w[l] = Matrix::Zero(arch.layer_out(l), arch.layer_in(l));
    b[l] = Vector::Zero(arch.layer_out(l));
  }
}

template <typename Real>
void MlpNet<Real>::init_geometric(uint64_t seed, Real r0) {
  Rng rng(seed);
  const int hidden = arch.hidden_layers;
  for (int l = 0; l < hidden; ++l) {
    const Real std_dev = std::sqrt(Real(2) / Real(arch.layer_out(l)));
    for (Eigen::Index i = 0; i < w[l].size(); ++i)
      w[l].data()[i] = std_dev * static_cast<Real>(rng.normal());
    b[l].setZero();
    if (l == arch.skip_layer)  // do not couple the raw coordinates at the start
      w[l].rightCols(3).setZero();
  }
  const int last = hidden;
  const Real mean = std::sqrt(Real(std::numbers::pi) / Real(arch.layer_in(last)));
  for (Eigen::Index i = 0; i < w[last].size(); ++i)
    w[last].data()[i] = mean + Real(1e-5) * static_cast<Real>(rng.normal());
  b[last].setConstant(-r0);
}

template <typename Real>
void MlpNet<Real>::to_flat(std::vector<double>& out) const {
  out.clear();
  out.reserve(static_cast<size_t>(parameter_count()));
  for (size_t l = 0; l < w.size(); ++l) {
    for (Eigen::Index i = 0; i < w[l].size(); ++i) out.push_back(double(w[l].data()[i]));
    for (Eigen::Index i = 0; i < b[l].size(); ++i) out.push_back(double(b[l].data()[i]));
  }
}

template <typename Real>
void MlpNet<Real>::from_flat(const std::vector<double>& flat) {
  if (flat.size() != static_cast<size_t>(parameter_count()))
    throw std::invalid_argument("MlpNet: parameter vector length mismatch");
  size_t k = 0;
  for (size_t l = 0; l < w.size(); ++l) {
    for (Eigen::Index i = 0; i < w[l].size(); ++i) w[l].data()[i] = Real(flat[k++]);
    for (Eigen::Index i = 0; i < b[l].size(); ++i) b[l].data()[i] = Real(flat[k++]);
  }
}

template <typename Real>
template <typename OtherReal>
MlpNet<OtherReal> MlpNet<Real>::cast() const {
  MlpNet<OtherReal> out(arch);
  for (size_t l = 0; l < w.size(); ++l) {
    out.w[l] = w[l].template cast<OtherReal>();
    out.b[l] = b[l].template cast<OtherReal>();
  }
  return out;
}

template <typename Real>
MlpGrad<Real>::MlpGrad(const MlpArch& arch) {
  const int layers = arch.layer_count();
  w.resize(layers);
  b.resize(layers);
  for (int l = 0; l < layers; ++l) {
    w[l] = MlpNet<Real>::Matrix::Zero(arch.layer_out(l), arch.layer_in(l));
    b[l] = MlpNet<Real>::Vector::Zero(arch.layer_out(l));
  }
}

template <typename Real>
void MlpGrad<Real>::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

template <typename Real>
void MlpGrad<Real>::add(const MlpGrad& other, Real factor) {
  for (size_t l = 0; l < w.size(); ++l) {
    w[l] += factor * other.w[l];
    b[l] += factor * other.b[l];
  }
}

template <typename Real>
void MlpGrad<Real>::to_flat(std::vector<double>& out) const {
  out.clear();
  for (size_t l = 0; l < w.size(); ++l) {
    for (Eigen::Index i = 0; i < w[l].size(); ++i) out.push_back(double(w[l].data()[i]));
    for (Eigen::Index i = 0; i < b[l].size(); ++i) out.push_back(double(b[l].data()[i]));
  }
}

namespace detail {

// Forward pass over a chunk carrying values and input Jacobians.
// Column layout of every work matrix: [0, B) values, B + 3*i + d = tangent d
// of sample i. Caches everything the backward pass needs.
template <typename Real>
struct ForwardCache {
  using Matrix = typename MlpNet<Real>::Matrix;
  std::vector<Matrix> x;      // x[l]: input of layer l (after skip concat)
  std::vector<Matrix> a_val;  // pre-activation values (hidden layers)
  std::vector<Matrix> a_jac;  // pre-activation tangents (hidden layers)
  std::vector<Matrix> d;      // sigma'(a_val)
};

template <typename Real>
void activation_tables(const MlpNet<Real>& net, const typename MlpNet<Real>::Matrix& a,
                       typename MlpNet<Real>::Matrix& value, typename MlpNet<Real>::Matrix& deriv) {
  const Real beta = Real(net.arch.softplus_beta);
  if (net.arch.activation == Activation::softplus) {
    const auto aa = a.array();
    value = (aa.max(Real(0)) + (-(beta * aa).abs()).exp().log1p() / beta).matrix();
    deriv = (Real(1) / (Real(1) + (-beta * aa).exp())).matrix();
  } else {
    value = a.cwiseMax(Real(0));
    deriv = (a.array() > Real(0)).template cast<Real>().matrix();
  }
}

// q: 3 x B. Returns s (per sample) and g (3 x B) and fills the cache.
template <typename Real>
void forward_vj(const MlpNet<Real>& net, const typename MlpNet<Real>::Matrix& q,
                ForwardCache<Real>& cache, Eigen::Matrix<Real, Eigen::Dynamic, 1>& s,
                typename MlpNet<Real>::Matrix& g) {
  using Matrix = typename MlpNet<Real>::Matrix;
  const int bsz = static_cast<int>(q.cols());
  const int hidden = net.arch.hidden_layers;
  const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));

  cache.x.assign(hidden + 1, Matrix());
  cache.a_val.assign(hidden, Matrix());
  cache.a_jac.assign(hidden, Matrix());
  cache.d.assign(hidden, Matrix());

  Matrix x0 = Matrix::Zero(3, 4 * bsz);
  x0.leftCols(bsz) = q;
  for (int i = 0; i < bsz; ++i)
    for (int dd = 0; dd < 3; ++dd) x0(dd, bsz + 3 * i + dd) = Real(1);

  Matrix h = x0;
  for (int l = 0; l < hidden; ++l) {
    if (l == net.arch.skip_layer) {
      Matrix cat(h.rows() + 3, 4 * bsz);
      cat.topRows(h.rows()) = h;
      cat.bottomRows(3) = x0;
      h = cat * inv_sqrt2;
    }
    cache.x[l] = std::move(h);

    Matrix a = net.w[l] * cache.x[l];
    a.leftCols(bsz).colwise() += net.b[l];
    cache.a_val[l] = a.leftCols(bsz);
    cache.a_jac[l] = a.rightCols(3 * bsz);

    Matrix value, deriv;
    activation_tables(net, cache.a_val[l], value, deriv);
    cache.d[l] = std::move(deriv);

    h.resize(a.rows(), 4 * bsz);
    h.leftCols(bsz) = value;
    for (int i = 0; i < bsz; ++i)
      for (int dd = 0; dd < 3; ++dd)
        h.col(bsz + 3 * i + dd) = cache.d[l].col(i).cwiseProduct(cache.a_jac[l].col(3 * i + dd));
  }
  cache.x[hidden] = std::move(h);

  const Matrix out = net.w[hidden] * cache.x[hidden];  // 1 x 4B
  s.resize(bsz);
  g.resize(3, bsz);
  for (int i = 0; i < bsz; ++i) {
    s(i) = out(0, i) + net.b[hidden](0);
    for (int dd = 0; dd < 3; ++dd) g(dd, i) = out(0, bsz + 3 * i + dd);
  }
}

// Reverse pass over the cached forward. Seeds: sbar per sample, gbar 3 x B.
// Accumulates (+=) into grad.
template <typename Real>
void backward_vj(const MlpNet<Real>& net, const ForwardCache<Real>& cache,
                 const Eigen::Matrix<Real, Eigen::Dynamic, 1>& sbar,
                 const typename MlpNet<Real>::Matrix& gbar, MlpGrad<Real>& grad) {
  using Matrix = typename MlpNet<Real>::Matrix;
  const int bsz = static_cast<int>(sbar.size());
  const int hidden = net.arch.hidden_layers;
  const Real beta = Real(net.arch.softplus_beta);
  const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
  const bool smooth = net.arch.activation == Activation::softplus;

  Matrix ybar(1, 4 * bsz);
  for (int i = 0; i < bsz; ++i) {
    ybar(0, i) = sbar(i);
    for (int dd = 0; dd < 3; ++dd) ybar(0, bsz + 3 * i + dd) = gbar(dd, i);
  }
  grad.w[hidden].noalias() += ybar * cache.x[hidden].transpose();
  grad.b[hidden](0) += sbar.sum();
  Matrix hbar = net.w[hidden].transpose() * ybar;

  for (int l = hidden - 1; l >= 0; --l) {
    if (l + 1 == net.arch.skip_layer)  // undo the concat [h; q] / sqrt(2)
      hbar = Matrix(hbar.topRows(hbar.rows() - 3) * inv_sqrt2);

    // Adjoint of the pre-activation. Value columns pick up the second-order
    // path: jacobian adjoints couple back through sigma''(a) * a_jac.
    Matrix abar(cache.d[l].rows(), 4 * bsz);
    for (int i = 0; i < bsz; ++i) {
      auto dcol = cache.d[l].col(i).array();
      abar.col(i).array() = hbar.col(i).array() * dcol;
      if (smooth) {
        typename MlpNet<Real>::Vector second =
            hbar.col(bsz + 3 * i).cwiseProduct(cache.a_jac[l].col(3 * i));
        second += hbar.col(bsz + 3 * i + 1).cwiseProduct(cache.a_jac[l].col(3 * i + 1));
        second += hbar.col(bsz + 3 * i + 2).cwiseProduct(cache.a_jac[l].col(3 * i + 2));
        abar.col(i).array() += second.array() * (beta * dcol * (Real(1) - dcol));
      }
      for (int dd = 0; dd < 3; ++dd)
        abar.col(bsz + 3 * i + dd).array() = hbar.col(bsz + 3 * i + dd).array() * dcol;
    }

    grad.w[l].noalias() += abar * cache.x[l].transpose();
    grad.b[l] += abar.leftCols(bsz).rowwise().sum();
    if (l > 0) hbar = net.w[l].transpose() * abar;
  }
}

// Lean value-only forward for batched evaluation (no tangents, no cache).
template <typename Real>
void forward_values(const MlpNet<Real>& net, const typename MlpNet<Real>::Matrix& q,
                    Eigen::Matrix<Real, Eigen::Dynamic, 1>& out) {
  using Matrix = typename MlpNet<Real>::Matrix;
  const int bsz = static_cast<int>(q.cols());
  const int hidden = net.arch.hidden_layers;
  const Real inv_sqrt2 = Real(1) / std::sqrt(Real(2));
  const Real beta = Real(net.arch.softplus_beta);
  const bool smooth = net.arch.activation == Activation::softplus;

  Matrix h = q;
  for (int l = 0; l < hidden; ++l) {
    if (l == net.arch.skip_layer) {
      Matrix cat(h.rows() + 3, bsz);
      cat.topRows(h.rows()) = h;
      cat.bottomRows(3) = q;
      h = cat * inv_sqrt2;
    }
    Matrix a = net.w[l] * h;
    a.colwise() += net.b[l];
    if (smooth) {
      auto aa = a.array();
      a = (aa.max(Real(0)) + (-(beta * aa).abs()).exp().log1p() / beta).matrix();
    } else {
      a = a.cwiseMax(Real(0));
    }
    h = std::move(a);
  }
  out = (net.w[hidden] * h).row(0).transpose();
  out.array() += net.b[hidden](0);
}

}  // namespace detail

template <typename Real>
Real MlpNet<Real>::eval(const Point3& q) const {
  Matrix qm(3, 1);
  qm << Real(q.x), Real(q.y), Real(q.z);
  Vector out;
  detail::forward_values(*this, qm, out);
  return out(0);
}

template <typename Real>
std::pair<Real, Point3> MlpNet<Real>::eval_with_gradient(const Point3& q) const {
  if (!q.finite()) throw std::domain_error("eval_with_gradient: non-finite query");
  Matrix qm(3, 1);
  qm << Real(q.x), Real(q.y), Real(q.z);
  detail::ForwardCache<Real> cache;
  Vector s;
  Matrix g;
  detail::forward_vj(*this, qm, cache, s, g);
  if (!std::isfinite(double(s(0))))
    throw std::runtime_error("eval_with_gradient: non-finite network output");
  return {s(0), Point3{double(g(0, 0)), double(g(1, 0)), double(g(2, 0))}};
}

template <typename Real>
void MlpNet<Real>::eval_batch(const Matrix& q, Vector& out) const {
  detail::forward_values(*this, q, out);
}

std::optional<Point3> pull(const Point3& q, double s, const Point3& g, double eps) {
  const double n = g.norm();
  if (!(n > eps)) return std::nullopt;
  return q - g * (s / n);
}

template <typename Real>
LossStats pull_loss(const MlpNet<Real>& net, const QueryBatch<Real>& batch, Real eps_grad,
                    MlpGrad<Real>* grad) {
  using Matrix = typename MlpNet<Real>::Matrix;
  using Vector = typename MlpNet<Real>::Vector;
  const int total = batch.count();
  if (total == 0) throw std::invalid_argument("pull_loss: empty batch");
  const size_t chunks = chunk_count(total, kChunk);

  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<int> chunk_used(chunks, 0);
  std::vector<MlpGrad<Real>> partial;
  if (grad) partial.assign(chunks, MlpGrad<Real>(net.arch));

  parallel_chunks(total, kChunk, [&](size_t c, size_t begin, size_t end) {
    const int bsz = static_cast<int>(end - begin);
    const Matrix q = batch.q.middleCols(begin, bsz);
    const Matrix t = batch.t.middleCols(begin, bsz);

    detail::ForwardCache<Real> cache;
    Vector s;
    Matrix g;
    detail::forward_vj(net, q, cache, s, g);

    Vector sbar = Vector::Zero(bsz);
    Matrix gbar = Matrix::Zero(3, bsz);
    double loss_sum = 0.0;
    int used = 0;
    for (int i = 0; i < bsz; ++i) {
      const Real gn = g.col(i).norm();
      if (!(gn > eps_grad)) continue;  // degenerate gradient: skip and count
      ++used;
      Eigen::Matrix<Real, 3, 1> ghat = g.col(i) / gn;
      Eigen::Matrix<Real, 3, 1> e = q.col(i) - s(i) * ghat - t.col(i);
      loss_sum += double(e.squaredNorm());
      if (grad) {
        const Real ge = ghat.dot(e);
        sbar(i) = Real(-2) * ge;
        gbar.col(i) = (Real(-2) * s(i) / gn) * (e - ge * ghat);
      }
    }
    chunk_loss[c] = loss_sum;
    chunk_used[c] = used;
    if (grad && used > 0) detail::backward_vj(net, cache, sbar, gbar, partial[c]);
  });

  LossStats stats;
  double loss_sum = 0.0;
  for (size_t c = 0; c < chunks; ++c) {  // fixed reduction order
    loss_sum += chunk_loss[c];
    stats.used += chunk_used[c];
  }
  stats.skipped = total - stats.used;
  if (stats.used == 0) return stats;
  stats.loss = loss_sum / stats.used;
  if (grad) {
    grad->set_zero();
    for (size_t c = 0; c < chunks; ++c) grad->add(partial[c]);
    const Real inv = Real(1) / Real(stats.used);
    for (size_t l = 0; l < grad->w.size(); ++l) {
      grad->w[l] *= inv;
      grad->b[l] *= inv;
    }
  }
  return stats;
}

template <typename Real>
QueryPool<Real>::QueryPool(const std::vector<Point3>& cloud, int queries_per_point, int knn_rank,
                           uint64_t seed) {
  if (cloud.size() < 2) throw std::domain_error("QueryPool: need at least 2 points");
  if (queries_per_point < 1 || knn_rank < 1)
    throw std::invalid_argument("QueryPool: queries_per_point and knn_rank must be >= 1");
  const size_t n = cloud.size();
  const size_t k_eff = std::min<size_t>(knn_rank, n - 1);

  KdTree3 tree(cloud);
  queries_.resize(n * queries_per_point);
  targets_.resize(n * queries_per_point);

  parallel_chunks(n, 256, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      // rank k_eff + 1 because the point itself sits at rank 1
      const double sigma = tree.knn_distance(cloud[i], k_eff + 1);
      Rng rng(derive_seed(seed, i));
      for (int j = 0; j < queries_per_point; ++j) {
        Point3 q = cloud[i];
        q.x += sigma * rng.normal();
        q.y += sigma * rng.normal();
        q.z += sigma * rng.normal();
        const size_t idx = i * queries_per_point + j;
        queries_[idx] = q;
        targets_[idx] = cloud[tree.nearest(q)];
      }
    }
  });
}

template <typename Real>
QueryBatch<Real> QueryPool<Real>::draw(int batch_size, Rng& rng) const {
  QueryBatch<Real> batch;
  batch.q.resize(3, batch_size);
  batch.t.resize(3, batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const size_t idx = rng.bounded(queries_.size());
    batch.q(0, i) = Real(queries_[idx].x);
    batch.q(1, i) = Real(queries_[idx].y);
    batch.q(2, i) = Real(queries_[idx].z);
    batch.t(0, i) = Real(targets_[idx].x);
    batch.t(1, i) = Real(targets_[idx].y);
    batch.t(2, i) = Real(targets_[idx].z);
  }
  return batch;
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (queries_per_point < 1) throw std::invalid_argument("TrainConfig: queries_per_point >= 1");
  if (knn_rank < 1) throw std::invalid_argument("TrainConfig: knn_rank must be >= 1");
  if (!(eps_grad > 0)) throw std::invalid_argument("TrainConfig: eps_grad must be > 0");
  if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
  arch.validate();
}

namespace {

template <typename Real>
MlpNet<double> train_impl(const std::vector<Point3>& cloud, const TrainConfig& cfg,
                          TrainResult* result) {
  MlpNet<Real> net(cfg.arch);
  net.init_geometric(derive_seed(cfg.seed, kInitStream));
  if (cfg.steps == 0) return net.template cast<double>();

  QueryPool<Real> pool(cloud, cfg.queries_per_point, cfg.knn_rank,
                       derive_seed(cfg.seed, kPoolStream));
  Rng batch_rng(derive_seed(cfg.seed, kBatchStream));

  MlpGrad<Real> grad(cfg.arch), m(cfg.arch), v(cfg.arch);
  MlpNet<Real> last_good = net;

  for (int step = 1; step <= cfg.steps; ++step) {
    const double lr =
        cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step - 1) / double(cfg.steps)));
    QueryBatch<Real> batch = pool.draw(cfg.batch_size, batch_rng);
    const LossStats stats = pull_loss(net, batch, Real(cfg.eps_grad), &grad);
    if (stats.used == 0)
      throw std::runtime_error("train: every sample of step " + std::to_string(step) +
                               " had a degenerate gradient");
    if (!std::isfinite(stats.loss)) {
      if (result) {
        result->diverged = true;
        result->divergence_step = step;
      }
      return last_good.template cast<double>();  // abort with the last finite-loss params
    }
    last_good = net;

    // Adam with bias correction.
    const Real b1 = Real(cfg.adam_beta1), b2 = Real(cfg.adam_beta2);
    const Real c1 = Real(1) - std::pow(b1, Real(step));
    const Real c2 = Real(1) - std::pow(b2, Real(step));
    const Real eps = Real(cfg.adam_eps);
    const Real rate = Real(lr);
    for (size_t l = 0; l < net.w.size(); ++l) {
      m.w[l] = b1 * m.w[l] + (Real(1) - b1) * grad.w[l];
      v.w[l] = b2 * v.w[l] + (Real(1) - b2) * grad.w[l].cwiseProduct(grad.w[l]);
      net.w[l].array() -=
          rate * (m.w[l].array() / c1) / ((v.w[l].array() / c2).sqrt() + eps);
      m.b[l] = b1 * m.b[l] + (Real(1) - b1) * grad.b[l];
      v.b[l] = b2 * v.b[l] + (Real(1) - b2) * grad.b[l].cwiseProduct(grad.b[l]);
      net.b[l].array() -=
          rate * (m.b[l].array() / c1) / ((v.b[l].array() / c2).sqrt() + eps);
    }

    if (result) {
      result->total_skipped += stats.skipped;
      if (step % cfg.log_every == 0 || step == cfg.steps)
        result->log.push_back({step, stats.loss, lr, stats.skipped});
    }
  }
  return net.template cast<double>();
}

}  // namespace

MlpSdf train(const std::vector<Point3>& unit_cloud, const UnitTransform& transform,
             const TrainConfig& cfg, TrainResult* result) {
  cfg.validate();
  if (!(transform.scale > 0)) throw std::invalid_argument("train: transform scale must be > 0");
  MlpSdf sdf;
  sdf.transform = transform;
  sdf.net = cfg.use_f64 ? train_impl<double>(unit_cloud, cfg, result)
                        : train_impl<float>(unit_cloud, cfg, result);
  return sdf;
}

template struct MlpNet<float>;
template struct MlpNet<double>;
template MlpNet<float> MlpNet<float>::cast<float>() const;
template MlpNet<double> MlpNet<float>::cast<double>() const;
template MlpNet<float> MlpNet<double>::cast<float>() const;
template MlpNet<double> MlpNet<double>::cast<double>() const;
template struct MlpGrad<float>;
template struct MlpGrad<double>;
template class QueryPool<float>;
template class QueryPool<double>;
template LossStats pull_loss<float>(const MlpNet<float>&, const QueryBatch<float>&, float,
                                    MlpGrad<float>*);
template LossStats pull_loss<double>(const MlpNet<double>&, const QueryBatch<double>&, double,
                                     MlpGrad<double>*);

}  // namespace aoct
