#pragma once

#include <cstdint>
#include <optional>

#include "qmcr/chains1d.hpp"

namespace qmcr {

// SplitMix64 stream keyed by (seed, stream); serial and parallel runs agree
// because every trajectory owns stream = its index.
class CounterRng {
public:
  CounterRng(uint64_t seed, uint64_t stream);
  uint64_t next_u64();
  double uniform();  // [0, 1)

private:
  uint64_t state_;
};

struct TrajectoryConfig {
  long shots = 100000;
  int max_steps = 10000;
  uint64_t seed = 1;
};

struct McEstimate {
  double pi_hat = 0, pi_se = 0;
  double pi_upper = 0;  // pi_hat plus the censored fraction (bracket)
  double tau_hat = 0, tau_se = 0;  // conditional on return
  double censored_fraction = 0;
  long shots = 0;
  long returned = 0;
  std::vector<double> histogram;  // return-time frequencies, entry n-1 for time n (first 64)
};

// Kraus-unraveled trajectory with projective monitoring after each step;
// returns the first-return time or nullopt when censored at max_steps.
std::optional<int> sample_first_return(const KrausMap& phi, const CMat& p_proj, const CVec& psi0,
                                       CounterRng& rng, int max_steps);

// Mixed initial states are sampled from the eigendecomposition of rho.
McEstimate estimate(const KrausMap& phi, const CMat& p_proj, const CMat& rho,
                    const TrajectoryConfig& cfg);

// Site-walk samplers for the 1d models (unbounded lattice, no truncation).
std::optional<int> sample_first_return_walk(const HalfLineModel& m, int start_site,
                                            const CVec& psi0, int monitored_site,
                                            const CMat& monitor_proj, CounterRng& rng,
                                            int max_steps);
std::optional<int> sample_first_return_walk(const LineModel& m, int start_site, const CVec& psi0,
                                            int monitored_site, const CMat& monitor_proj,
                                            CounterRng& rng, int max_steps);

McEstimate estimate_walk(const HalfLineModel& m, int site, const CMat& rho,
                         const TrajectoryConfig& cfg, const CMat& proj = {});
McEstimate estimate_walk(const LineModel& m, int site, const CMat& rho,
                         const TrajectoryConfig& cfg, const CMat& proj = {});

}  // namespace qmcr
