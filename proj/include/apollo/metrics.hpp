#pragma once

#include <span>
#include <string>
#include <vector>

#include "apollo/errors.hpp"
#include "apollo/solver.hpp"

namespace apollo::metrics {

/// A metric whose normalizer is zero (mean label 0, zero label variance, ...).
class UndefinedMetric : public DataError {
public:
    using DataError::DataError;
};

struct MetricsReport {
    double nrmse = 0.0;
    double nmae = 0.0;
    double r2 = 0.0;
    double pearson_r = 0.0;
    std::size_t n_points = 0;
};

/// (1/ybar) * sqrt(sum (y-p)^2 / N)
double nrmse(std::span<const double> labels, std::span<const double> predictions);
/// sum |y-p| / sum y
double nmae(std::span<const double> labels, std::span<const double> predictions);
/// 1 - SS_res / SS_tot; negative for fits worse than the mean.
double r_squared(std::span<const double> labels, std::span<const double> predictions);
double pearson(std::span<const double> a, std::span<const double> b);

MetricsReport report(std::span<const double> labels, std::span<const double> predictions);

inline constexpr double kVifCeiling = 1e6;
inline constexpr double kVifRidge = 1e-9;

struct VifReport {
    std::vector<double> values;
    double mean = 0.0;
    double median = 0.0;
};

/// Variance inflation factor of each column against the others.
///
/// Columns are centered (not standardized). VIF_j = 1/(1 - R^2_j) equals the
/// j-th diagonal entry of the inverse correlation matrix, computed here with
/// a 1e-9 ridge on the diagonal so exact collinearity stays finite; values
/// are capped at 1e6. Zero-variance columns are reported at the cap.
/// Throws ParameterError for fewer than two columns.
VifReport vif(const solver::DesignMatrix& columns);

/// Sum of absolute weights.
double weight_mass(std::span<const double> weights);

/// Discrete-time current change: d[i] = p[i+1] - p[i].
std::vector<double> delta_current(std::span<const double> power);

std::string report_to_json(const MetricsReport& r);

}  // namespace apollo::metrics
