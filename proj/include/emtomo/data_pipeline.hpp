#ifndef EMTOMO_DATA_PIPELINE_HPP
#define EMTOMO_DATA_PIPELINE_HPP

#include "emtomo/solver.hpp"

namespace emtomo {

struct DataGenOptions {
    int refine_times = 1;   // uniform IN-region refinements of the data mesh
    double cfl_safety = 0.9;
    double blowup = 1e12;
};

// forward-solves the truth coefficients on a finer mesh than the inversion
// will use and samples the transmitted signal back on the inversion time grid
ObservationSet generate_observations(const HybridMesh& mesh, const std::vector<double>& eps_truth,
                                     const std::vector<double>& sigma_truth,
                                     const SourceSpec& src, double T, double tau,
                                     const DataGenOptions& opts = {});

// additive Gaussian noise, scaled per field component by the peak amplitude
// of that component; delta = 0 returns the input untouched
ObservationSet add_noise(ObservationSet obs, double delta, unsigned long long seed);

// centered moving average in time, then a truncated Gaussian average across
// the observation face; window 1 / radius 0 are identities
ObservationSet smooth(const ObservationSet& obs, int temporal_window, double spatial_radius);

// linear interpolation of the series onto a new time grid covering the same
// window
ObservationSet resample_observations(const ObservationSet& obs, double tau_new, int steps_new);

} // namespace emtomo

#endif
