#include "nlbt/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "nlbt/errors.hpp"

namespace nlbt {

void SimGrid::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) throw UsageError("grid: horizon T must be positive");
  if (steps < 1) throw UsageError("grid: steps must be at least 1");
  if (paths < 1) throw UsageError("grid: paths must be at least 1");
  if (!std::isfinite(t0)) throw UsageError("grid: t0 must be finite");
}

int simulation_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("NLBT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return hw;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent per-path Gaussian stream producing dW = K^{1/2} ξ √dt.
class PathNoise {
 public:
  PathNoise(const MatrixXd& k_sqrt, double dt) : k_sqrt_(k_sqrt), sqdt_(std::sqrt(dt)), xi_(k_sqrt.rows()) {}

  void reset(std::uint64_t seed, std::uint64_t path) {
    rng_.seed(splitmix64(seed ^ splitmix64(path + 0x632be59bd9b4e019ULL)));
    normal_ = std::normal_distribution<double>();
  }
  void draw(VectorXd& dw) {
    for (Eigen::Index j = 0; j < xi_.size(); ++j) xi_(j) = normal_(rng_);
    dw.noalias() = k_sqrt_ * xi_;
    dw *= sqdt_;
  }

 private:
  const MatrixXd& k_sqrt_;
  double sqdt_;
  VectorXd xi_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

// One Euler–Maruyama step of a fixed system, allocation free.
class Propagator {
 public:
  Propagator(const StochasticSystem& sys, const MatrixXd& controls, double dt, bool tamed)
      : sys_(sys), controls_(controls), dt_(dt), tamed_(tamed), drift_(sys.n()), incr_(sys.n()), tmp_(sys.n()) {
    for (int i = 0; i < sys.m(); ++i) {
      if (sys.multiplicative_mask()[static_cast<std::size_t>(i)]) active_g_.push_back(i);
    }
    for (int j = 0; j < sys.q(); ++j) {
      if (!sys.Gamma()[static_cast<std::size_t>(j)].is_identically_zero()) active_gamma_.push_back(j);
    }
    has_B_ = sys.m() > 0 && sys.B().cwiseAbs().maxCoeff() != 0.0;
    has_M_ = sys.m() > 0 && !sys.M_is_zero();
    has_E_ = sys.m() > 0 && sys.p() > 0 && sys.E().cwiseAbs().maxCoeff() != 0.0;
  }

  void step(Eigen::Ref<VectorXd> x, int k, const VectorXd& dw) {
    const auto u = controls_.col(k);
    sys_.f().evaluate(x, drift_);
    const double scale = tamed_ ? 1.0 / (1.0 + dt_ * drift_.norm()) : 1.0;
    if (has_B_) drift_.noalias() += sys_.B() * u;
    for (int i : active_g_) {
      const double ui = u(i);
      if (ui == 0.0) continue;
      sys_.G()[static_cast<std::size_t>(i)].evaluate(x, tmp_);
      drift_ += ui * tmp_;
    }
    incr_ = (dt_ * scale) * drift_;
    for (int j : active_gamma_) {
      sys_.Gamma()[static_cast<std::size_t>(j)].evaluate(x, tmp_);
      incr_ += dw(j) * tmp_;
    }
    if (has_M_) {
      for (int j = 0; j < sys_.q(); ++j) {
        tmp_.noalias() = sys_.M()[static_cast<std::size_t>(j)] * u;
        incr_ += dw(j) * tmp_;
      }
    }
    x += incr_;
  }

  void output(const Eigen::Ref<const VectorXd>& x, int k, Eigen::Ref<VectorXd> y) const {
    sys_.h().evaluate(x, y);
    if (has_E_) y.noalias() += sys_.E() * controls_.col(k);
  }

 private:
  const StochasticSystem& sys_;
  const MatrixXd& controls_;
  double dt_;
  bool tamed_;
  VectorXd drift_, incr_, tmp_;
  std::vector<int> active_g_, active_gamma_;
  bool has_B_ = false, has_M_ = false, has_E_ = false;
};

MatrixXd sample_controls(const ControlSignal& u, int m, const SimGrid& grid) {
  if (u.channels() != m) {
    throw DimensionError("control has " + std::to_string(u.channels()) + " channels, system has m = " +
                         std::to_string(m));
  }
  MatrixXd c(m, grid.steps + 1);
  const double dt = grid.dt();
  for (int k = 0; k <= grid.steps; ++k) {
    VectorXd col(m);
    u.evaluate(grid.t0 + k * dt, col);
    c.col(k) = col;
  }
  return c;
}

VectorXd time_axis(const SimGrid& grid) {
  VectorXd t(grid.steps + 1);
  for (int k = 0; k <= grid.steps; ++k) t(k) = grid.t0 + k * grid.dt();
  return t;
}

inline double trap_weight(int k, int first, int last, double dt) {
  return (k == first || k == last) ? 0.5 * dt : dt;
}

// Per-batch sums of per-path scalars and time series.
struct Acc {
  int count = 0;
  int flagged = 0;
  long first_flag_path = -1;
  int first_flag_step = -1;
  VectorXd scalars;
  MatrixXd series;
};

struct PathScratch {
  VectorXd scalars;
  MatrixXd series;
};

int batch_count(int paths, int requested) { return std::max(1, std::min(paths, std::max(requested, 1))); }

// Runs fn(batch, begin, end, acc) for every batch, spread over worker
// threads. Each batch is processed by exactly one thread in path order, so
// the outcome is independent of the thread count.
template <class Fn>
std::vector<Acc> run_batches(int paths, int n_batches, int n_scalars, int n_series, int len, Fn fn) {
  std::vector<Acc> accs(static_cast<std::size_t>(n_batches));
  for (auto& a : accs) {
    a.scalars = VectorXd::Zero(n_scalars);
    a.series = MatrixXd::Zero(n_series, len);
  }
  const int workers = std::min(simulation_threads(), n_batches);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      for (int b; (b = next.fetch_add(1)) < n_batches;) {
        const long begin = static_cast<long>(paths) * b / n_batches;
        const long end = static_cast<long>(paths) * (b + 1) / n_batches;
        fn(begin, end, accs[static_cast<std::size_t>(b)]);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(n_batches);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return accs;
}

void check_divergence(const std::vector<Acc>& accs, int paths, const SimOptions& opts, int* flagged_out) {
  int flagged = 0;
  long first_path = -1;
  int first_step = -1;
  for (const auto& a : accs) {
    flagged += a.flagged;
    if (first_path < 0 && a.first_flag_path >= 0) {
      first_path = a.first_flag_path;
      first_step = a.first_flag_step;
    }
  }
  *flagged_out = flagged;
  if (flagged > opts.max_flagged_fraction * paths) {
    std::ostringstream os;
    os << flagged << " of " << paths << " paths exceeded |x| > " << opts.explosion_threshold
       << " (first: path " << first_path << " at step " << first_step
       << "); reduce dt or enable the tamed scheme";
    throw DivergenceError(os.str());
  }
  if (flagged == paths) throw DivergenceError("every simulated path diverged");
}

// Mean over unflagged paths and batch-means standard error.
Estimate combine_scalar(const std::vector<Acc>& accs, int idx) {
  double sum = 0.0;
  long total = 0;
  for (const auto& a : accs) {
    sum += a.scalars(idx);
    total += a.count;
  }
  Estimate e;
  if (total == 0) return e;
  e.value = sum / static_cast<double>(total);
  int used = 0;
  double ss = 0.0;
  for (const auto& a : accs) {
    if (a.count == 0) continue;
    ++used;
    const double d = a.scalars(idx) / a.count - e.value;
    ss += a.count * d * d;
  }
  e.se = used >= 2 ? std::sqrt(ss / ((used - 1) * static_cast<double>(total)))
                   : std::numeric_limits<double>::quiet_NaN();
  return e;
}

Series combine_series(const std::vector<Acc>& accs, int row) {
  const auto len = accs.front().series.cols();
  Series s{VectorXd::Zero(len), VectorXd::Zero(len)};
  long total = 0;
  for (const auto& a : accs) {
    s.mean += a.series.row(row).transpose();
    total += a.count;
  }
  if (total == 0) return s;
  s.mean /= static_cast<double>(total);
  int used = 0;
  for (const auto& a : accs) {
    if (a.count == 0) continue;
    ++used;
    const VectorXd d = a.series.row(row).transpose() / a.count - s.mean;
    s.se += a.count * d.cwiseAbs2();
  }
  if (used >= 2) {
    s.se = (s.se / ((used - 1) * static_cast<double>(total))).cwiseSqrt();
  } else {
    s.se.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return s;
}

void flag(Acc& acc, long path, int step) {
  ++acc.flagged;
  if (acc.first_flag_path < 0) {
    acc.first_flag_path = path;
    acc.first_flag_step = step;
  }
}

bool exploded(const VectorXd& x, double threshold) { return !(x.norm() <= threshold); }

Estimate root_of(const Estimate& sq) {
  Estimate e;
  e.value = std::sqrt(std::max(sq.value, 0.0));
  e.se = e.value > 0.0 ? sq.se / (2.0 * e.value) : std::sqrt(std::max(sq.se, 0.0));
  return e;
}

}  // namespace

SimulationResult simulate(const StochasticSystem& sys, const ControlSignal& u, const VectorXd& x0,
                          const SimGrid& grid, const SimOptions& opts) {
  grid.validate();
  if (x0.size() != sys.n()) throw DimensionError("simulate: x0 has the wrong length");
  const int n = sys.n();
  const int ndir = static_cast<int>(opts.directions.cols());
  if (ndir > 0 && opts.directions.rows() != n) throw DimensionError("simulate: directions must have n rows");
  const MatrixXd controls = sample_controls(u, sys.m(), grid);
  const double dt = grid.dt();
  const int steps = grid.steps;
  const int nb = batch_count(grid.paths, opts.batches);

  SimulationResult res;
  res.t = time_axis(grid);
  res.paths = grid.paths;
  res.batches = nb;
  res.tamed = opts.tamed;
  if (opts.keep_trajectories) {
    res.trajectories.assign(static_cast<std::size_t>(grid.paths) * (steps + 1) * n, 0.0);
  }

  const int n_series = 2 + ndir;
  auto accs = run_batches(grid.paths, nb, 1, n_series, steps + 1, [&](long begin, long end, Acc& acc) {
    Propagator prop(sys, controls, dt, opts.tamed);
    PathNoise noise(sys.K_sqrt(), dt);
    VectorXd x(n), y(sys.p()), dw(sys.q()), proj(ndir);
    PathScratch ps{VectorXd::Zero(1), MatrixXd::Zero(n_series, steps + 1)};
    for (long path = begin; path < end; ++path) {
      noise.reset(grid.seed, static_cast<std::uint64_t>(path));
      x = x0;
      double J = 0.0;
      bool bad = false;
      for (int k = 0; k <= steps; ++k) {
        prop.output(x, k, y);
        const double y2 = y.squaredNorm();
        J += trap_weight(k, 0, steps, dt) * y2;
        ps.series(0, k) = y2;
        ps.series(1, k) = x.squaredNorm();
        if (ndir > 0) {
          proj.noalias() = opts.directions.transpose() * x;
          for (int d = 0; d < ndir; ++d) ps.series(2 + d, k) = proj(d) * proj(d);
        }
        if (opts.keep_trajectories) {
          std::memcpy(&res.trajectories[(static_cast<std::size_t>(path) * (steps + 1) + k) * n], x.data(),
                      sizeof(double) * n);
        }
        if (k == steps) break;
        noise.draw(dw);
        prop.step(x, k, dw);
        if (exploded(x, opts.explosion_threshold)) {
          flag(acc, path, k + 1);
          bad = true;
          break;
        }
      }
      if (bad) continue;
      ++acc.count;
      acc.scalars(0) += J;
      acc.series += ps.series;
    }
  });
  check_divergence(accs, grid.paths, opts, &res.flagged);
  res.output_mean_sq = combine_series(accs, 0);
  res.state_second_moment = combine_series(accs, 1);
  for (int d = 0; d < ndir; ++d) res.direction_energy.push_back(combine_series(accs, 2 + d));
  res.l2T_norm_sq = combine_scalar(accs, 0);
  return res;
}

std::vector<PairedResult> simulate_coupled_many(const StochasticSystem& ref,
                                                const std::vector<const StochasticSystem*>& others,
                                                const ControlSignal& u, const VectorXd& x0_ref,
                                                const std::vector<VectorXd>& x0_others, const SimGrid& grid,
                                                const SimOptions& opts) {
  grid.validate();
  if (others.size() != x0_others.size()) throw DimensionError("coupled simulation: one x0 per system required");
  if (x0_ref.size() != ref.n()) throw DimensionError("coupled simulation: reference x0 has the wrong length");
  for (std::size_t s = 0; s < others.size(); ++s) {
    const StochasticSystem& o = *others[s];
    if (o.m() != ref.m() || o.p() != ref.p() || o.q() != ref.q()) {
      throw DimensionError("coupled simulation: systems must share input, output and noise dimensions");
    }
    if (o.q() > 0 && (o.K() - ref.K()).cwiseAbs().maxCoeff() > 0.0) {
      throw DimensionError("coupled simulation: noise covariances differ");
    }
    if (x0_others[s].size() != o.n()) throw DimensionError("coupled simulation: x0 has the wrong length");
  }
  const MatrixXd controls = sample_controls(u, ref.m(), grid);
  const double dt = grid.dt();
  const int steps = grid.steps;
  const int nb = batch_count(grid.paths, opts.batches);
  const int ns = static_cast<int>(others.size());

  // scalars: J_ref, then J_diff per system; series: diff per system.
  auto accs = run_batches(grid.paths, nb, 1 + ns, std::max(ns, 1), steps + 1, [&](long begin, long end, Acc& acc) {
    Propagator pref(ref, controls, dt, opts.tamed);
    std::vector<Propagator> props;
    props.reserve(others.size());
    for (const auto* o : others) props.emplace_back(*o, controls, dt, opts.tamed);
    PathNoise noise(ref.K_sqrt(), dt);
    VectorXd xr(ref.n()), yr(ref.p()), yo(ref.p()), dw(ref.q());
    std::vector<VectorXd> xs(others.size());
    PathScratch ps{VectorXd::Zero(1 + ns), MatrixXd::Zero(std::max(ns, 1), steps + 1)};
    for (long path = begin; path < end; ++path) {
      noise.reset(grid.seed, static_cast<std::uint64_t>(path));
      xr = x0_ref;
      for (int s = 0; s < ns; ++s) xs[static_cast<std::size_t>(s)] = x0_others[static_cast<std::size_t>(s)];
      ps.scalars.setZero();
      bool bad = false;
      for (int k = 0; k <= steps; ++k) {
        const double w = trap_weight(k, 0, steps, dt);
        pref.output(xr, k, yr);
        ps.scalars(0) += w * yr.squaredNorm();
        for (int s = 0; s < ns; ++s) {
          props[static_cast<std::size_t>(s)].output(xs[static_cast<std::size_t>(s)], k, yo);
          const double e = (yr - yo).squaredNorm();
          ps.scalars(1 + s) += w * e;
          ps.series(s, k) = e;
        }
        if (k == steps) break;
        noise.draw(dw);
        pref.step(xr, k, dw);
        bad = exploded(xr, opts.explosion_threshold);
        for (int s = 0; s < ns && !bad; ++s) {
          auto& xo = xs[static_cast<std::size_t>(s)];
          props[static_cast<std::size_t>(s)].step(xo, k, dw);
          bad = exploded(xo, opts.explosion_threshold);
        }
        if (bad) {
          flag(acc, path, k + 1);
          break;
        }
      }
      if (bad) continue;
      ++acc.count;
      acc.scalars += ps.scalars;
      if (ns > 0) acc.series += ps.series;
    }
  });
  int flagged = 0;
  check_divergence(accs, grid.paths, opts, &flagged);

  std::vector<PairedResult> out;
  const Estimate l2_ref = combine_scalar(accs, 0);
  for (int s = 0; s < ns; ++s) {
    PairedResult r;
    r.error_sq = combine_scalar(accs, 1 + s);
    r.error_norm = root_of(r.error_sq);
    r.diff_mean_sq = combine_series(accs, s);
    r.l2T_A = l2_ref;
    r.paths = grid.paths;
    r.flagged = flagged;
    out.push_back(std::move(r));
  }
  return out;
}

PairedResult simulate_coupled(const StochasticSystem& a, const StochasticSystem& b, const ControlSignal& u,
                              const VectorXd& x0a, const VectorXd& x0b, const SimGrid& grid, const SimOptions& opts) {
  return simulate_coupled_many(a, {&b}, u, x0a, {x0b}, grid, opts).front();
}

DecayFit stability_probe(const StochasticSystem& sys, const VectorXd& x0, const SimGrid& grid, double lambda_cert,
                         const ControlSignal& u, const SimOptions& opts) {
  if (sys.m() > 0 && sys.B().cwiseAbs().maxCoeff() != 0.0) throw UsageError("stability probe requires B = 0");
  if (!sys.M_is_zero()) throw UsageError("stability probe requires M = 0");
  const SimulationResult res = simulate(sys, u, x0, grid, opts);
  DecayFit fit;
  fit.lambda_cert = lambda_cert;
  fit.t = res.t;
  fit.second_moment = res.state_second_moment;
  const VectorXd& m = fit.second_moment.mean;
  const VectorXd& se = fit.second_moment.se;
  const int steps = grid.steps;

  if (m.cwiseAbs().maxCoeff() == 0.0) {
    fit.trivial = true;
    fit.envelope_ok = true;
    fit.note = "zero trajectory: E|x(t)|^2 vanishes identically";
    return fit;
  }
  const int half = steps / 2;
  double st = 0, sy = 0, stt = 0, sty = 0;
  int cnt = 0;
  for (int k = half; k <= steps; ++k) {
    if (!(m(k) > 0.0)) throw Error("stability probe: non-positive second moment at t = " + std::to_string(res.t(k)));
    const double tt = res.t(k) - grid.t0;
    const double ly = std::log(m(k));
    st += tt;
    sy += ly;
    stt += tt * tt;
    sty += tt * ly;
    ++cnt;
  }
  const double den = cnt * stt - st * st;
  const double slope = den > 0.0 ? (cnt * sty - st * sy) / den : 0.0;
  const double icpt = (sy - slope * st) / cnt;
  double rss = 0.0;
  for (int k = half; k <= steps; ++k) {
    const double r = std::log(m(k)) - (icpt + slope * (res.t(k) - grid.t0));
    rss += r * r;
  }
  fit.decay_rate = -slope;
  fit.fit_residual = std::sqrt(rss / cnt);
  fit.decays = fit.decay_rate > 0.0;
  if (!fit.decays) fit.note = "no decay";

  const double x0sq = x0.squaredNorm();
  if (x0sq > 0.0) {
    for (int k = 0; k <= half; ++k) {
      const double tt = res.t(k) - grid.t0;
      fit.k_hat = std::max(fit.k_hat, m(k) * std::exp(lambda_cert * tt) / x0sq);
    }
    fit.envelope_ok = true;
    fit.worst_envelope_excess = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= steps; ++k) {
      const double env = fit.k_hat * x0sq * std::exp(-lambda_cert * (res.t(k) - grid.t0));
      const double s = std::isnan(se(k)) ? 0.0 : se(k);
      if (m(k) > env + 4.0 * s) fit.envelope_ok = false;
      if (s > 0.0) fit.worst_envelope_excess = std::max(fit.worst_envelope_excess, (m(k) - env) / s);
    }
  }
  return fit;
}

DirectionEnergy direction_energy(const StochasticSystem& sys, const ControlSignal& u, const SimGrid& grid,
                                 const MatrixXd& directions, const SimOptions& opts) {
  if (directions.rows() != sys.n() || directions.cols() < 1) {
    throw DimensionError("direction_energy: directions must be n x k with k >= 1");
  }
  const MatrixXd gram = directions.transpose() * directions;
  if ((gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > 1e-12) {
    throw UsageError("direction_energy: directions are not orthonormal to 1e-12");
  }
  SimOptions o = opts;
  o.directions = directions;
  const SimulationResult res = simulate(sys, u, VectorXd::Zero(sys.n()), grid, o);
  DirectionEnergy out;
  out.t = res.t;
  out.energy = res.direction_energy;
  out.second_moment = res.state_second_moment;
  const auto k = directions.cols();
  out.sup.resize(k);
  out.sup_se.resize(k);
  for (Eigen::Index d = 0; d < k; ++d) {
    Eigen::Index arg = 0;
    out.sup(d) = out.energy[static_cast<std::size_t>(d)].mean.maxCoeff(&arg);
    out.sup_se(d) = out.energy[static_cast<std::size_t>(d)].se(arg);
  }
  return out;
}

TruncationProbe observability_truncation_probe(const StochasticSystem& sys, const ControlSignal& u,
                                               const SimGrid& grid, const VectorXd& q, double mu, double t0,
                                               double delta, const VectorXd& x0, const SimOptions& opts) {
  grid.validate();
  if (q.size() != sys.n()) throw DimensionError("truncation probe: q has the wrong length");
  if (std::abs(q.norm() - 1.0) > 1e-10) throw UsageError("truncation probe: q must be a unit vector");
  if (x0.size() != sys.n()) throw DimensionError("truncation probe: x0 has the wrong length");
  if (!(delta > 0.0)) throw UsageError("truncation probe: delta must be positive");
  const double dt = grid.dt();
  const int steps = grid.steps;
  const long k0l = std::lround((t0 - grid.t0) / dt);
  if (!(t0 < grid.t0 + grid.T) || k0l < 0 || k0l >= steps) {
    throw UsageError("truncation probe: t0 must lie in [start, T) of the grid");
  }
  const int k0 = static_cast<int>(k0l);
  const MatrixXd controls = sample_controls(u, sys.m(), grid);

  TruncationProbe out;
  out.t0 = grid.t0 + k0 * dt;
  const ControlSignal ut = multiplicative_control(sys, u);
  out.exp_factor = std::exp(ut.energy(out.t0, grid.t0 + grid.T) / (delta * delta));
  const double weight = mu * out.exp_factor;

  const int nb = batch_count(grid.paths, opts.batches);
  auto accs = run_batches(grid.paths, nb, 3, 1, 1, [&](long begin, long end, Acc& acc) {
    Propagator prop(sys, controls, dt, opts.tamed);
    PathNoise noise(sys.K_sqrt(), dt);
    VectorXd x(sys.n()), xh(sys.n()), y(sys.p()), yh(sys.p()), dw(sys.q());
    for (long path = begin; path < end; ++path) {
      noise.reset(grid.seed, static_cast<std::uint64_t>(path));
      x = x0;
      bool bad = false;
      double c = 0.0, err = 0.0;
      for (int k = 0; k <= steps; ++k) {
        if (k == k0) {
          c = x.dot(q);
          xh = x - c * q;
        }
        if (k >= k0) {
          prop.output(x, k, y);
          prop.output(xh, k, yh);
          err += trap_weight(k, k0, steps, dt) * (y - yh).squaredNorm();
        }
        if (k == steps) break;
        noise.draw(dw);
        prop.step(x, k, dw);
        bad = exploded(x, opts.explosion_threshold);
        if (!bad && k >= k0) {
          prop.step(xh, k, dw);
          bad = exploded(xh, opts.explosion_threshold);
        }
        if (bad) {
          flag(acc, path, k + 1);
          break;
        }
      }
      if (bad) continue;
      ++acc.count;
      acc.scalars(0) += err;
      acc.scalars(1) += c * c;
      acc.scalars(2) += err - weight * c * c;
    }
  });
  int flagged = 0;
  check_divergence(accs, grid.paths, opts, &flagged);
  out.error = combine_scalar(accs, 0);
  out.coeff_sq = combine_scalar(accs, 1);
  out.slack = combine_scalar(accs, 2);
  out.bound = weight * out.coeff_sq.value;
  const double se = std::isnan(out.slack.se) ? 0.0 : out.slack.se;
  out.satisfied = out.slack.value <= 4.0 * se;
  return out;
}

void write_trajectories(const std::string& path, const SimulationResult& res, int n, int steps) {
  if (res.trajectories.empty()) throw UsageError("no trajectories were retained");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot open " + path + " for writing");
  const char magic[4] = {'N', 'L', 'B', 'T'};
  const std::uint32_t header[4] = {1u, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(steps),
                                   static_cast<std::uint32_t>(res.paths)};
  os.write(magic, 4);
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  os.write(reinterpret_cast<const char*>(res.trajectories.data()),
           static_cast<std::streamsize>(res.trajectories.size() * sizeof(double)));
  if (!os) throw Error("failed writing " + path);
}

}  // namespace nlbt
