#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinnplace/net.hpp"
#include "pinnplace/optim.hpp"
#include "pinnplace/oracle.hpp"
#include "pinnplace/problems.hpp"

namespace pinnplace {

/// Parameter sensitivities of the observable state as a function of sensor
/// position (and time for transient problems).
struct SensitivityField {
  int n_params = 1;
  bool transient = false;
  std::vector<double> times;  // quadrature times when transient
  std::function<Eigen::VectorXd(double x, double y, double t)> eval;
};

SensitivityField field_from_net_1d(const NetworkParams& net, double pe_prior);
SensitivityField field_from_net_2d(const NetworkParams& net, double pe_prior, double da_prior,
                                   const std::vector<double>& times, double t_end);
SensitivityField field_from_fd_1d(const Grid1D& g, double pe, double da);
SensitivityField field_from_fd_2d(const Solution2D& s_pe, const Solution2D& s_da);

using FimMatrix = Eigen::MatrixXd;

/// Fisher information accumulated over sensors (and trapezoid-in-time for
/// transient fields).
FimMatrix fim_at(const SensitivityField& f, const std::vector<std::array<double, 2>>& sensors);

/// Sensors must sit strictly inside the channel: boundary locations measure
/// what the boundary conditions already pin down, so they carry no parameter
/// information, and model sensitivities are least reliable there.
inline constexpr double kSensorMargin = 0.04;

/// True when (x, y) is at least kSensorMargin from every boundary.
bool sensor_feasible(const Geometry2D& geom, double x, double y);

enum class Criterion { Trace, LogDet };
std::string criterion_name(Criterion);

/// Trace or log-determinant with eigenvalues floored at zero; a singular FIM
/// yields a large negative log-determinant rather than NaN.
double criterion_value(const FimMatrix& m, Criterion c);

struct SensorSet {
  std::vector<std::array<double, 2>> locations;  // y = 0 for 1D problems
  std::string criterion;
  double value = 0.0;
  std::map<std::string, double> lambda_prior;
  uint64_t seed = 0;
};

void save_sensors_json(const std::string& path, const SensorSet& s);
SensorSet load_sensors_json(const std::string& path);

/// Criterion landscape for a single sensor swept over candidate abscissae.
std::vector<double> criterion_landscape_1d(const SensitivityField& f,
                                           const std::vector<double>& xs, Criterion c);

/// Exhaustive single-sensor argmax over a 1D candidate grid.
SensorSet place_grid_1d(const SensitivityField& f, const std::vector<double>& xs, Criterion c);

/// CMA-ES placement of n sensors in the channel; infeasible proposals are
/// penalized by squared constraint violation. Restarts rerun with a doubled
/// population; the best of all runs wins.
SensorSet place_cma(const SensitivityField& f, int n_sensors, const Geometry2D& geom,
                    Criterion c, const CmaConfig& cma, int restarts = 3);

}  // namespace pinnplace
