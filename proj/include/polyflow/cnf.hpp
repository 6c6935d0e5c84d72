// Continuous normalizing flows trained by conditional flow matching with
// straight-line (Euclidean geodesic) interpolants, integrated by a projected
// midpoint scheme. Three flavours share the machinery:
//
//   Euclidean  - flow directly on the polytope, uniform base on the polytope
//   Ball       - flow on the unit ball, pulled back through the ball map
//   Aitchison  - flow on standardized ilr coordinates, standard normal base

#ifndef POLYFLOW_CNF_HPP
#define POLYFLOW_CNF_HPP

#include "polyflow/ball_transform.hpp"
#include "polyflow/mcmc.hpp"
#include "polyflow/mlp.hpp"
#include "polyflow/simplex_coords.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace polyflow {

// ---------------------------------------------------------------------------
// Projections

struct ProjectionOptions {
  double tol = 1e-10;
  int max_iter = 100000;
};

/// Euclidean projection onto {x : A x <= b} by Dykstra's alternating
/// half-space projections.
inline Vector project_polytope(const Eigen::Ref<const Vector>& y, const HPolytope& H,
                               const ProjectionOptions& opt = {}) {
  require(y.size() == H.dim(), "project_polytope: wrong dimension");
  if (H.contains(y, 0.0)) return y;
  const Index m = H.rows();
  const Vector norms2 = H.A().rowwise().squaredNorm();
  Vector x = y;
  Matrix incr = Matrix::Zero(H.dim(), m);
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const Vector x_prev = x;
    for (Index i = 0; i < m; ++i) {
      const Vector z = x + incr.col(i);
      const double viol = H.A().row(i).dot(z) - H.b()(i);
      x = viol > 0.0 ? Vector(z - (viol / norms2(i)) * H.A().row(i).transpose()) : z;
      incr.col(i) = z - x;
    }
    const double viol = (H.A() * x - H.b()).maxCoeff();
    if (viol <= opt.tol && (x - x_prev).lpNorm<Eigen::Infinity>() <= opt.tol) return x;
  }
  throw ConvergenceError("project_polytope: Dykstra iteration did not converge");
}

/// Euclidean projection of y onto the probability simplex.
inline Vector project_simplex(const Eigen::Ref<const Vector>& y) {
  std::vector<double> u(y.data(), y.data() + y.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  return (y.array() - theta).max(0.0).matrix();
}

/// Euclidean projection onto conv(V): accelerated projected gradient on
/// min ||V lambda - y||^2 over the simplex.
inline Vector project_polytope(const Eigen::Ref<const Vector>& y, const VPolytope& P,
                               const ProjectionOptions& opt = {}) {
  const Matrix& V = P.V();
  require(y.size() == V.rows(), "project_polytope: wrong dimension");
  const double L = Eigen::JacobiSVD<Matrix>(V).singularValues()(0);
  const double step = 1.0 / (L * L);
  const Index n = V.cols();
  Vector lambda = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector w = lambda;
  double tk = 1.0;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const Vector grad = V.transpose() * (V * w - y);
    const Vector next = project_simplex(w - step * grad);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    w = next + ((tk - 1.0) / tn) * (next - lambda);
    const double change = (next - lambda).lpNorm<Eigen::Infinity>();
    lambda = next;
    tk = tn;
    if (change < opt.tol * 1e-2) {
      // Duality gap of the simplex-constrained problem.
      const Vector g = V.transpose() * (V * lambda - y);
      const double gap = lambda.dot((g.array() - g.minCoeff()).matrix());
      if (gap <= opt.tol * std::max(1.0, y.squaredNorm())) return V * lambda;
    }
  }
  throw ConvergenceError("project_polytope: projected gradient did not converge");
}

// ---------------------------------------------------------------------------
// Manifolds

enum class ManifoldKind { Euclidean, EuclideanPolytope, UnitBall, IlrSpace };

struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::Euclidean;
  HPolytope polytope;  // EuclideanPolytope only

  /// Projects every column onto the manifold.
  void project(Matrix& X) const {
    switch (kind) {
      case ManifoldKind::UnitBall:
        for (Index j = 0; j < X.cols(); ++j) {
          const double n = X.col(j).norm();
          if (n > 1.0) X.col(j) /= n;
        }
        break;
      case ManifoldKind::EuclideanPolytope:
        for (Index j = 0; j < X.cols(); ++j)
          if (!polytope.contains(X.col(j), 0.0)) X.col(j) = project_polytope(X.col(j), polytope);
        break;
      default:
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// Vector field psi(h, t) = net([h; t])

inline Matrix field_input(const Matrix& Hb, const Eigen::Ref<const Vector>& t) {
  Matrix X(Hb.rows() + 1, Hb.cols());
  X.topRows(Hb.rows()) = Hb;
  X.row(Hb.rows()) = t.transpose();
  return X;
}

inline Matrix field_input(const Matrix& Hb, double t) {
  return field_input(Hb, Vector::Constant(Hb.cols(), t));
}

inline Matrix velocity(const MLP& net, const Matrix& Hb, double t) { return net.forward(field_input(Hb, t)); }

struct DivergenceMode {
  int probes = 0;  // 0: exact trace; otherwise Hutchinson with this many probes

  static DivergenceMode exact() { return {0}; }
  static DivergenceMode hutchinson(int n) {
    require(n >= 1, "DivergenceMode: need at least one probe");
    return {n};
  }
  bool is_exact() const { return probes == 0; }
};

/// Velocity and divergence (trace of d psi / d h) at each column.
inline Matrix velocity_and_divergence(const MLP& net, const Matrix& Hb, double t, Vector& div,
                                      const DivergenceMode& mode = {}, RandomStream* rng = nullptr) {
  const Index K = Hb.rows();
  const Index N = Hb.cols();
  MLP::Tape tape;
  Matrix Y = net.forward(field_input(Hb, t), tape);
  div = Vector::Zero(N);
  Matrix dX = Matrix::Zero(K + 1, N);
  if (mode.is_exact()) {
    for (Index k = 0; k < K; ++k) {
      dX.row(k).setOnes();
      div += net.jvp(tape, dX).row(k).transpose();
      dX.row(k).setZero();
    }
  } else {
    require(rng != nullptr, "velocity_and_divergence: Hutchinson mode needs a random stream");
    for (int p = 0; p < mode.probes; ++p) {
      for (Index j = 0; j < N; ++j)
        for (Index k = 0; k < K; ++k) dX(k, j) = rng->rademacher();
      const Matrix JdX = net.jvp(tape, dX);
      div += (dX.topRows(K).array() * JdX.array()).colwise().sum().matrix().transpose();
    }
    div /= static_cast<double>(mode.probes);
  }
  return Y;
}

inline Vector divergence_exact(const MLP& net, const Matrix& Hb, double t) {
  Vector div;
  velocity_and_divergence(net, Hb, t, div);
  return div;
}

inline Vector divergence_hutchinson(const MLP& net, const Matrix& Hb, double t, int n_probes, RandomStream& rng) {
  Vector div;
  velocity_and_divergence(net, Hb, t, div, DivergenceMode::hutchinson(n_probes), &rng);
  return div;
}

// ---------------------------------------------------------------------------
// Integration

struct IntegrationResult {
  Matrix states;
  Vector div_integral;  // integral of the divergence over [0, 1], per column
};

/// Fixed-step midpoint scheme from t0 to t1 (either direction) with a
/// projection after the half and the full step. With track_divergence, the
/// divergence at the midpoint accumulates into an estimate of
/// int_0^1 div psi dt (sign independent of direction).
inline IntegrationResult integrate(const MLP& net, Matrix Hb, const ManifoldSpec& manifold, double step, double t0,
                                   double t1, bool track_divergence = false, const DivergenceMode& mode = {},
                                   RandomStream* rng = nullptr) {
  require(step > 0.0 && step <= 1.0, "integrate: step must lie in (0, 1]");
  const Index n = std::max<Index>(1, static_cast<Index>(std::llround(std::abs(t1 - t0) / step)));
  const double dt = (t1 - t0) / static_cast<double>(n);
  IntegrationResult out;
  out.div_integral = Vector::Zero(Hb.cols());
  manifold.project(Hb);
  for (Index i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    Matrix half = Hb + (0.5 * dt) * velocity(net, Hb, t);
    manifold.project(half);
    Matrix v_mid;
    if (track_divergence) {
      Vector div;
      v_mid = velocity_and_divergence(net, half, t + 0.5 * dt, div, mode, rng);
      out.div_integral += std::abs(dt) * div;
    } else {
      v_mid = velocity(net, half, t + 0.5 * dt);
    }
    Hb += dt * v_mid;
    manifold.project(Hb);
    if (!Hb.allFinite()) throw NumericalError("integrate: state became non-finite");
  }
  out.states = std::move(Hb);
  return out;
}

// ---------------------------------------------------------------------------
// Flow matching

struct Interpolant {
  Matrix ht;
  Matrix target;  // h1 - h0
};

/// h^t = (1 - t) h0 + t h1, target velocity h1 - h0; t is per column.
inline Interpolant geodesic_interpolant(const Matrix& h0, const Matrix& h1, const Eigen::Ref<const Vector>& t) {
  require(h0.rows() == h1.rows() && h0.cols() == h1.cols() && t.size() == h0.cols(),
          "geodesic_interpolant: shape mismatch");
  Interpolant out;
  out.ht = h0 * (1.0 - t.array()).matrix().asDiagonal();
  out.ht += h1 * t.asDiagonal();
  out.target = h1 - h0;
  return out;
}

/// Loss mean_j ||psi(h^t_j, t_j) - (h1_j - h0_j)||^2 and its parameter gradient.
inline double rcfm_loss(const MLP& net, const Matrix& h0, const Matrix& h1, const Eigen::Ref<const Vector>& t,
                        MLP::Gradient* grad = nullptr) {
  const Interpolant ip = geodesic_interpolant(h0, h1, t);
  MLP::Tape tape;
  const Matrix R = net.forward(field_input(ip.ht, t), tape) - ip.target;
  const double B = static_cast<double>(h0.cols());
  const double loss = R.squaredNorm() / B;
  if (!std::isfinite(loss)) throw NumericalError("rcfm_loss: loss is not finite");
  if (grad) *grad = net.backward(tape, (2.0 / B) * R);
  return loss;
}

inline double rcfm_step(MLP& net, Adam& adam, const Matrix& h0, const Matrix& h1, const Eigen::Ref<const Vector>& t) {
  MLP::Gradient g;
  const double loss = rcfm_loss(net, h0, h1, t, &g);
  adam.step(net, g);
  return loss;
}

// ---------------------------------------------------------------------------
// Flows on polytopes

enum class FlowKind { Euclidean, Ball, Aitchison };

inline const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::Euclidean: return "euclid";
    case FlowKind::Ball: return "ball";
    case FlowKind::Aitchison: return "ait";
  }
  return "?";
}

inline FlowKind parse_flow_kind(const std::string& s) {
  if (s == "euclid") return FlowKind::Euclidean;
  if (s == "ball") return FlowKind::Ball;
  if (s == "ait") return FlowKind::Aitchison;
  throw DomainError("unknown manifold '" + s + "' (expected euclid, ball or ait)");
}

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 35;
  Index batch_size = 8192;
  double step_size = 0.05;
  std::vector<Index> hidden = std::vector<Index>(6, 512);
  DivergenceMode divergence;
  std::uint64_t seed = 0;
  bool project_euclidean = false;  // project Euclidean flows onto the polytope while integrating
  Index max_steps = -1;            // optional cap on optimizer steps
};

struct TrainedFlow {
  FlowKind kind = FlowKind::Ball;
  MLP net;
  HPolytope polytope;  // rounded (John-position) polytope
  BallMapConfig ball;
  std::optional<AitchisonMap> aitchison;
  double log_volume = 0.0;  // Euclidean base: log vol of the polytope
  double step_size = 0.05;
  bool project_euclidean = false;
  DivergenceMode divergence;
  std::vector<double> loss_history;

  Index dim() const { return polytope.dim(); }

  ManifoldSpec manifold() const {
    ManifoldSpec m;
    switch (kind) {
      case FlowKind::Euclidean:
        if (project_euclidean) {
          m.kind = ManifoldKind::EuclideanPolytope;
          m.polytope = polytope;
        }
        break;
      case FlowKind::Ball: m.kind = ManifoldKind::UnitBall; break;
      case FlowKind::Aitchison: m.kind = ManifoldKind::IlrSpace; break;
    }
    return m;
  }
};

/// log of the uniform density on the unit K-ball.
inline double log_uniform_ball_density(Index K) {
  const double k = static_cast<double>(K);
  return std::lgamma(0.5 * k + 1.0) - 0.5 * k * std::log(kPi);
}

inline double log_std_normal(const Eigen::Ref<const Vector>& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * kPi);
}

/// Uniform draws from a polytope containing the origin, by hit-and-run.
inline Matrix uniform_polytope_samples(const HPolytope& H, Index n, std::uint64_t seed, Index n_chains = 8) {
  if (n == 0) return Matrix(H.dim(), 0);
  SamplerConfig cfg;
  cfg.n_chains = std::min<Index>(n_chains, n);
  cfg.n_samples = (n + cfg.n_chains - 1) / cfg.n_chains;
  cfg.burn_in = 1000;
  cfg.thin = 10;
  cfg.seed = seed;
  return run_chains(H, [](const Vector&) { return 0.0; }, cfg).samples().leftCols(n);
}

/// Base draws in flow coordinates.
inline Matrix base_samples(const TrainedFlow& flow, Index n, RandomStream& rng) {
  const Index K = flow.dim();
  switch (flow.kind) {
    case FlowKind::Euclidean: return uniform_polytope_samples(flow.polytope, n, rng());
    case FlowKind::Ball: {
      Matrix X(K, n);
      for (Index j = 0; j < n; ++j) X.col(j) = random_in_ball(rng, K);
      return X;
    }
    case FlowKind::Aitchison: {
      Matrix X(K, n);
      for (Index j = 0; j < n; ++j) X.col(j) = rng.normal_vector(K);
      return X;
    }
  }
  return {};
}

inline double base_log_density(const TrainedFlow& flow, const Eigen::Ref<const Vector>& h0) {
  switch (flow.kind) {
    case FlowKind::Euclidean: return flow.polytope.contains(h0, 1e-12) ? -flow.log_volume : -kInf;
    case FlowKind::Ball: return h0.norm() <= 1.0 + 1e-12 ? log_uniform_ball_density(flow.dim()) : -kInf;
    case FlowKind::Aitchison: return log_std_normal(h0);
  }
  return -kInf;
}

/// Polytope points -> flow coordinates.
inline Matrix to_flow_coords(const TrainedFlow& flow, const Matrix& V) {
  switch (flow.kind) {
    case FlowKind::Euclidean: return V;
    case FlowKind::Ball: {
      BallMapConfig closed = flow.ball;
      closed.closed = true;
      return to_ball_batch(V, flow.polytope, closed);
    }
    case FlowKind::Aitchison: {
      Matrix Z(V.rows(), V.cols());
      for (Index j = 0; j < V.cols(); ++j) Z.col(j) = flow.aitchison->to_zt(V.col(j));
      return Z;
    }
  }
  return {};
}

/// Flow coordinates -> polytope points, with log|det d v / d h| per column.
inline Matrix from_flow_coords(const TrainedFlow& flow, const Matrix& Hc, Vector* logdet = nullptr) {
  Matrix V(Hc.rows(), Hc.cols());
  if (logdet) logdet->setZero(Hc.cols());
  switch (flow.kind) {
    case FlowKind::Euclidean: V = Hc; break;
    case FlowKind::Ball: {
      BallMapConfig closed = flow.ball;
      closed.closed = true;
      for (Index j = 0; j < Hc.cols(); ++j) {
        V.col(j) = from_ball(Hc.col(j), flow.polytope, closed);
        if (logdet) (*logdet)(j) = jacobian_ball(Hc.col(j), flow.polytope, closed).log_det;
      }
      break;
    }
    case FlowKind::Aitchison:
      for (Index j = 0; j < Hc.cols(); ++j) {
        V.col(j) = flow.aitchison->from_zt(Hc.col(j));
        if (logdet) (*logdet)(j) = flow.aitchison->logdet_jvt(Hc.col(j));
      }
      break;
  }
  return V;
}

inline constexpr Index kInferenceChunk = 1024;

struct FlowSamples {
  Matrix v;     // K x n polytope points
  Vector logq;  // log density of the flow at v (-inf for Euclidean samples outside)
  std::vector<bool> inside;
};

/// Draws n samples and their log densities by forward integration from the base.
inline FlowSamples sample_with_log_density(const TrainedFlow& flow, Index n, RandomStream& rng) {
  const Index K = flow.dim();
  FlowSamples out{Matrix(K, n), Vector(n), std::vector<bool>(static_cast<std::size_t>(n), true)};
  if (n == 0) return out;
  const Matrix base = base_samples(flow, n, rng);
  RandomStream probe_rng = rng.substream("hutchinson");
  for (Index start = 0; start < n; start += kInferenceChunk) {
    const Index m = std::min(kInferenceChunk, n - start);
    const Matrix h0 = base.middleCols(start, m);
    const IntegrationResult r =
        integrate(flow.net, h0, flow.manifold(), flow.step_size, 0.0, 1.0, true, flow.divergence, &probe_rng);
    Vector logdet;
    const Matrix V = from_flow_coords(flow, r.states, &logdet);
    for (Index j = 0; j < m; ++j) {
      const Index J = start + j;
      out.v.col(J) = V.col(j);
      const bool inside = flow.polytope.contains(V.col(j));
      out.inside[static_cast<std::size_t>(J)] = inside;
      out.logq(J) = inside || flow.kind != FlowKind::Euclidean
                        ? base_log_density(flow, h0.col(j)) - r.div_integral(j) - logdet(j)
                        : -kInf;
    }
  }
  return out;
}

inline Matrix sample(const TrainedFlow& flow, Index n, RandomStream& rng) {
  const Index K = flow.dim();
  if (n == 0) return Matrix(K, 0);
  const Matrix base = base_samples(flow, n, rng);
  Matrix V(K, n);
  for (Index start = 0; start < n; start += kInferenceChunk) {
    const Index m = std::min(kInferenceChunk, n - start);
    const IntegrationResult r =
        integrate(flow.net, base.middleCols(start, m), flow.manifold(), flow.step_size, 0.0, 1.0);
    V.middleCols(start, m) = from_flow_coords(flow, r.states);
  }
  return V;
}

/// log q at polytope points, by reverse integration to the base.
inline Vector log_density(const TrainedFlow& flow, const Matrix& V, RandomStream* rng = nullptr) {
  Vector out(V.cols());
  RandomStream local(0);
  RandomStream* probe_rng = rng ? rng : &local;
  for (Index start = 0; start < V.cols(); start += kInferenceChunk) {
    const Index m = std::min(kInferenceChunk, V.cols() - start);
    const Matrix Vc = V.middleCols(start, m);
    std::vector<bool> inside(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) inside[static_cast<std::size_t>(j)] = flow.polytope.strictly_contains(Vc.col(j));
    if (flow.kind != FlowKind::Euclidean) {
      for (Index j = 0; j < m; ++j)
        if (!inside[static_cast<std::size_t>(j)]) throw DomainError("log_density: point is outside the polytope");
    }
    Matrix Vin = Vc;
    for (Index j = 0; j < m; ++j)
      if (!inside[static_cast<std::size_t>(j)]) Vin.col(j).setZero();
    const Matrix H1 = to_flow_coords(flow, Vin);
    Vector logdet;
    from_flow_coords(flow, H1, &logdet);
    const IntegrationResult r =
        integrate(flow.net, H1, flow.manifold(), flow.step_size, 1.0, 0.0, true, flow.divergence, probe_rng);
    for (Index j = 0; j < m; ++j) {
      out(start + j) = inside[static_cast<std::size_t>(j)]
                           ? base_log_density(flow, r.states.col(j)) - r.div_integral(j) - logdet(j)
                           : -kInf;
    }
  }
  return out;
}

/// Trains a flow of the given kind on target samples (columns of V, rounded
/// coordinates inside `polytope`). The Euclidean flow needs log_volume; the
/// Aitchison flow needs the V-polytope whose mec coordinates define it.
inline TrainedFlow train_flow(FlowKind kind, const HPolytope& polytope, const Matrix& V, const TrainConfig& cfg,
                              double log_volume = 0.0, const VPolytope* vertices = nullptr,
                              const std::function<void(int, double)>& on_epoch = {}) {
  require(V.rows() == polytope.dim() && V.cols() >= 1, "train_flow: target samples do not match the polytope");
  const Index K = polytope.dim();
  RandomStream root(cfg.seed);
  TrainedFlow flow;
  flow.kind = kind;
  flow.polytope = polytope;
  flow.log_volume = log_volume;
  flow.step_size = cfg.step_size;
  flow.project_euclidean = cfg.project_euclidean;
  flow.divergence = cfg.divergence;
  if (kind == FlowKind::Aitchison) {
    require(vertices != nullptr, "train_flow: the Aitchison flow needs the polytope's vertices");
    flow.aitchison = fit_aitchison_map(*vertices, V);
  }
  std::vector<Index> sizes{K + 1};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(K);
  flow.net = MLP(sizes, root.substream("init"));
  Adam adam(flow.net, {cfg.lr});

  const Matrix H1 = to_flow_coords(flow, V);
  const Index N = H1.cols();
  const Index B = std::min(cfg.batch_size, N);
  RandomStream shuffle_rng = root.substream("shuffle");
  RandomStream base_rng = root.substream("base");
  RandomStream time_rng = root.substream("time");
  Matrix euclid_pool;
  if (kind == FlowKind::Euclidean) euclid_pool = uniform_polytope_samples(polytope, N, base_rng());

  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  Index steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start + B <= N; start += B) {
      if (cfg.max_steps >= 0 && steps >= cfg.max_steps) break;
      Matrix h1(K, B), h0(K, B);
      for (Index j = 0; j < B; ++j) h1.col(j) = H1.col(order[static_cast<std::size_t>(start + j)]);
      if (kind == FlowKind::Euclidean) {
        for (Index j = 0; j < B; ++j)
          h0.col(j) = euclid_pool.col(static_cast<Index>(base_rng() % static_cast<std::uint64_t>(N)));
      } else {
        h0 = base_samples(flow, B, base_rng);
      }
      Vector t(B);
      for (Index j = 0; j < B; ++j) t(j) = time_rng.uniform();
      epoch_loss += rcfm_step(flow.net, adam, h0, h1, t);
      ++batches;
      ++steps;
    }
    if (batches > 0) {
      flow.loss_history.push_back(epoch_loss / static_cast<double>(batches));
      if (on_epoch) on_epoch(epoch, flow.loss_history.back());
    }
  }
  return flow;
}

}  // namespace polyflow

#endif  // POLYFLOW_CNF_HPP
