#pragma once

/// @file problem_common.hpp
/// @brief Shared problem-level vocabulary: observation sets, power-law
/// couplings, and uniform collocation grids.

#include <functional>

#include "mfgpi/kernels.hpp"

namespace mfgpi {

/// Point observations of a scalar field.
struct Observations {
    Mat points;  ///< one location per row (space or space-time)
    Vec values;

    int count() const { return (int)values.size(); }
};

/// The coupling family F(m) = scale * m^exponent used by every experiment.
struct PowerCoupling {
    double scale = 1.0;
    double exponent = 1.0;

    double operator()(double m) const { return scale * std::pow(m, exponent); }
    double deriv(double m) const { return scale * exponent * std::pow(m, exponent - 1.0); }
};

/// Uniform periodic grid nodes on [origin, origin+1)^dim, axis 0 slowest
/// (matching the reference-oracle flat index), one node per row.
Mat uniform_grid_nodes(int per_axis, int dim, double origin);

}  // namespace mfgpi
