#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace rdrom {

/// Angular frequency (rad per unit time) of the largest peak of the
/// zero-padded periodogram of a real series, excluding DC, with parabolic
/// refinement on the peak bin. The series mean is removed first.
double dominant_frequency(const Eigen::VectorXd& series, double dt, int pad_factor = 16);

/// Same for a complex series, searching signed frequencies in [-pi/dt, pi/dt).
/// A series rotating as exp(i w t) peaks at +w.
double dominant_frequency(const Eigen::VectorXcd& series, double dt, int pad_factor = 16);

/// The `count` strongest distinct peaks of a complex series as signed
/// frequencies, strongest first.
std::vector<double> spectral_peaks(const Eigen::VectorXcd& series, double dt, int count,
                                   int pad_factor = 16);

/// The `count` strongest distinct spectral peaks of a real series (rad per
/// unit time, DC excluded), strongest first.
std::vector<double> spectral_peaks(const Eigen::VectorXd& series, double dt, int count,
                                   int pad_factor = 16);

}  // namespace rdrom
