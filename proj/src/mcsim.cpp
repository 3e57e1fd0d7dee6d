#include "qmcr/mcsim.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace qmcr {

namespace {

inline uint64_t splitmix_step(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(uint64_t seed, uint64_t stream) {
  state_ = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
  // burn two outputs so nearby streams decorrelate
  splitmix_step(state_);
  splitmix_step(state_);
}

uint64_t CounterRng::next_u64() { return splitmix_step(state_); }

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

namespace {

// Born measurement of P vs Q = I - P; true means the P outcome.
bool measure(const CMat& p, CVec& psi, CounterRng& rng) {
  CVec in = p * psi;
  double prob = in.squaredNorm();
  if (rng.uniform() < prob) {
    psi = in / std::sqrt(std::max(prob, 1e-300));
    return true;
  }
  psi = (psi - in) / std::sqrt(std::max(1.0 - prob, 1e-300));
  return false;
}

// Eigendecomposition of the initial density, done once per estimate.
struct InitialSampler {
  RVec weights;
  CMat vectors;
  double total;

  explicit InitialSampler(const CMat& rho) {
    Eigen::SelfAdjointEigenSolver<CMat> es(rho);
    weights = es.eigenvalues().cwiseMax(0.0);
    vectors = es.eigenvectors();
    total = weights.sum();
  }

  CVec pick(CounterRng& rng) const {
    double u = rng.uniform() * total;
    double acc = 0;
    for (Index i = 0; i < weights.size(); ++i) {
      acc += weights(i);
      if (u < acc) return vectors.col(i);
    }
    return vectors.col(weights.size() - 1);
  }
};

struct Accumulator {
  long returned = 0;
  long censored = 0;
  double sum_t = 0, sum_t2 = 0;
  std::vector<long> hist = std::vector<long>(64, 0);

  void add(const std::optional<int>& t) {
    if (!t) {
      ++censored;
      return;
    }
    ++returned;
    sum_t += *t;
    sum_t2 += static_cast<double>(*t) * (*t);
    if (*t >= 1 && *t <= 64) ++hist[*t - 1];
  }

  McEstimate finish(long shots) const {
    McEstimate e;
    e.shots = shots;
    e.returned = returned;
    e.pi_hat = static_cast<double>(returned) / shots;
    e.pi_se = std::sqrt(std::max(e.pi_hat * (1.0 - e.pi_hat), 0.0) / shots);
    e.censored_fraction = static_cast<double>(censored) / shots;
    e.pi_upper = e.pi_hat + e.censored_fraction;
    if (returned > 0) {
      e.tau_hat = sum_t / returned;
      double var = std::max(sum_t2 / returned - e.tau_hat * e.tau_hat, 0.0);
      e.tau_se = std::sqrt(var / returned);
    } else {
      e.tau_hat = std::numeric_limits<double>::quiet_NaN();
      e.tau_se = std::numeric_limits<double>::quiet_NaN();
    }
    e.histogram.reserve(hist.size());
    for (long h : hist) e.histogram.push_back(static_cast<double>(h) / shots);
    return e;
  }
};

}  // namespace

std::optional<int> sample_first_return(const KrausMap& phi, const CMat& p_proj, const CVec& psi0,
                                       CounterRng& rng, int max_steps) {
  CVec psi = psi0;
  const size_t nk = phi.kraus.size();
  std::vector<double> w(nk);
  std::vector<CVec> shot(nk);
  for (int step = 1; step <= max_steps; ++step) {
    // pick Kraus index i with probability ||B_i psi||^2, renormalize
    double total = 0;
    for (size_t i = 0; i < nk; ++i) {
      shot[i].noalias() = phi.kraus[i] * psi;
      w[i] = shot[i].squaredNorm();
      total += w[i];
    }
    double u = rng.uniform() * total;
    size_t pick = nk - 1;
    double acc = 0;
    for (size_t i = 0; i < nk; ++i) {
      acc += w[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    psi = shot[pick] / std::sqrt(std::max(w[pick], 1e-300));
    if (measure(p_proj, psi, rng)) return step;
  }
  return std::nullopt;
}

McEstimate estimate(const KrausMap& phi, const CMat& p_proj, const CMat& rho,
                    const TrajectoryConfig& cfg) {
  Accumulator acc;
  InitialSampler initial(rho);
  for (long shot = 0; shot < cfg.shots; ++shot) {
    CounterRng rng(cfg.seed, static_cast<uint64_t>(shot));
    CVec psi = initial.pick(rng);
    acc.add(sample_first_return(phi, p_proj, psi, rng, cfg.max_steps));
  }
  return acc.finish(cfg.shots);
}

namespace {

// Outgoing pieces of one column, flattened for the sampler. Columns are
// memoized so unbounded walks do not rebuild Kraus lists every step.
struct WalkColumn {
  std::vector<CMat> ops;
  std::vector<int> targets;
};

template <class Model>
class ColumnCache {
public:
  explicit ColumnCache(const Model& m) : m_(m) {}

  const WalkColumn& at(int site) {
    auto it = cols_.find(site);
    if (it != cols_.end()) return it->second;
    WalkColumn col;
    for (int to = site - 1; to <= site + 1; ++to) {
      auto blk = m_.block(to, site);
      if (!blk) continue;
      for (const auto& b : blk->kraus) {
        col.ops.push_back(b);
        col.targets.push_back(to);
      }
    }
    return cols_.emplace(site, std::move(col)).first->second;
  }

private:
  const Model& m_;
  std::map<int, WalkColumn> cols_;
};

template <class Model>
std::optional<int> walk_impl(ColumnCache<Model>& cache, int start_site, const CVec& psi0,
                             int monitored_site, const CMat& monitor_proj, CounterRng& rng,
                             int max_steps) {
  int site = start_site;
  CVec psi = psi0;
  std::vector<double> w;
  std::vector<CVec> shot;
  for (int step = 1; step <= max_steps; ++step) {
    const WalkColumn& col = cache.at(site);
    const size_t nk = col.ops.size();
    w.resize(nk);
    shot.resize(nk);
    double total = 0;
    for (size_t i = 0; i < nk; ++i) {
      shot[i].noalias() = col.ops[i] * psi;
      w[i] = shot[i].squaredNorm();
      total += w[i];
    }
    double u = rng.uniform() * total;
    size_t pick = nk - 1;
    double running = 0;
    for (size_t i = 0; i < nk; ++i) {
      running += w[i];
      if (u < running) {
        pick = i;
        break;
      }
    }
    site = col.targets[pick];
    psi = shot[pick] / std::sqrt(std::max(w[pick], 1e-300));

    if (site == monitored_site) {
      if (monitor_proj.size() == 0) return step;  // full-site monitor always fires
      if (measure(monitor_proj, psi, rng)) return step;
    }
  }
  return std::nullopt;
}

template <class Model>
McEstimate estimate_walk_impl(const Model& m, int site, const CMat& rho,
                              const TrajectoryConfig& cfg, const CMat& proj) {
  Accumulator acc;
  InitialSampler initial(rho);
  ColumnCache<Model> cache(m);
  for (long shot = 0; shot < cfg.shots; ++shot) {
    CounterRng rng(cfg.seed, static_cast<uint64_t>(shot));
    CVec psi = initial.pick(rng);
    acc.add(walk_impl(cache, site, psi, site, proj, rng, cfg.max_steps));
  }
  return acc.finish(cfg.shots);
}

}  // namespace

std::optional<int> sample_first_return_walk(const HalfLineModel& m, int start_site,
                                            const CVec& psi0, int monitored_site,
                                            const CMat& monitor_proj, CounterRng& rng,
                                            int max_steps) {
  ColumnCache<HalfLineModel> cache(m);
  return walk_impl(cache, start_site, psi0, monitored_site, monitor_proj, rng, max_steps);
}

std::optional<int> sample_first_return_walk(const LineModel& m, int start_site, const CVec& psi0,
                                            int monitored_site, const CMat& monitor_proj,
                                            CounterRng& rng, int max_steps) {
  ColumnCache<LineModel> cache(m);
  return walk_impl(cache, start_site, psi0, monitored_site, monitor_proj, rng, max_steps);
}

McEstimate estimate_walk(const HalfLineModel& m, int site, const CMat& rho,
                         const TrajectoryConfig& cfg, const CMat& proj) {
  return estimate_walk_impl(m, site, rho, cfg, proj);
}

McEstimate estimate_walk(const LineModel& m, int site, const CMat& rho,
                         const TrajectoryConfig& cfg, const CMat& proj) {
  return estimate_walk_impl(m, site, rho, cfg, proj);
}

}  // namespace qmcr
