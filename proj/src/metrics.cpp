#include "apollo/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace apollo::metrics {
namespace {

void check_pair(std::span<const double> y, std::span<const double> p, std::size_t min_n) {
    if (y.size() != p.size()) throw DataError("labels and predictions differ in length");
    if (y.size() < min_n) throw ParameterError("need at least " + std::to_string(min_n) + " points");
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double nrmse(std::span<const double> y, std::span<const double> p) {
    check_pair(y, p, 1);
    const double ybar = mean(y);
    if (ybar == 0.0) throw UndefinedMetric("NRMSE undefined: mean label is 0");
    double sse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sse += (y[i] - p[i]) * (y[i] - p[i]);
    return std::sqrt(sse / static_cast<double>(y.size())) / ybar;
}

double nmae(std::span<const double> y, std::span<const double> p) {
    check_pair(y, p, 1);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::abs(y[i] - p[i]);
        den += y[i];
    }
    if (den == 0.0) throw UndefinedMetric("NMAE undefined: labels sum to 0");
    return num / den;
}

double r_squared(std::span<const double> y, std::span<const double> p) {
    check_pair(y, p, 2);
    const double ybar = mean(y);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - p[i]) * (y[i] - p[i]);
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    if (ss_tot == 0.0) throw UndefinedMetric("R^2 undefined: labels have zero variance");
    return 1.0 - ss_res / ss_tot;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    check_pair(a, b, 2);
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw UndefinedMetric("Pearson correlation undefined: zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

MetricsReport report(std::span<const double> y, std::span<const double> p) {
    MetricsReport r;
    r.nrmse = nrmse(y, p);
    r.nmae = nmae(y, p);
    r.r2 = r_squared(y, p);
    r.pearson_r = pearson(y, p);
    r.n_points = y.size();
    return r;
}

VifReport vif(const solver::DesignMatrix& x) {
    const auto q = x.cols();
    if (q < 2) throw ParameterError("VIF needs at least two columns");
    const auto n = static_cast<double>(x.rows());
    if (x.rows() < 2) throw ParameterError("VIF needs at least two rows");

    const std::vector<double> ones(x.rows(), 1.0);
    std::vector<double> mean_col(q);
    for (std::size_t j = 0; j < q; ++j) mean_col[j] = x.dot(j, ones) / n;

    Eigen::MatrixXd cov(q, q);
    for (std::size_t j = 0; j < q; ++j) {
        for (std::size_t k = 0; k <= j; ++k) {
            const double c = x.gram(j, k) - n * mean_col[j] * mean_col[k];
            cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = c;
            cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = c;
        }
    }

    std::vector<bool> degenerate(q, false);
    Eigen::VectorXd inv_sd(q);
    for (std::size_t j = 0; j < q; ++j) {
        const double v = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        // Centered variance below rounding noise of the raw second moment.
        degenerate[j] = !(v > 1e-12 * std::max(1.0, x.sq_norm(j)));
        inv_sd(static_cast<Eigen::Index>(j)) = degenerate[j] ? 0.0 : 1.0 / std::sqrt(v);
    }
    Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    for (std::size_t j = 0; j < q; ++j) {
        // Degenerate columns become isolated unit entries; they are reported at the cap below.
        if (degenerate[j]) corr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = 1.0;
    }
    corr.diagonal().array() += kVifRidge;
    const Eigen::MatrixXd inv = corr.ldlt().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(q),
                                                                            static_cast<Eigen::Index>(q)));

    VifReport out;
    out.values.resize(q);
    for (std::size_t j = 0; j < q; ++j) {
        const double d = inv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        out.values[j] = (degenerate[j] || !std::isfinite(d)) ? kVifCeiling : std::clamp(d, 1.0, kVifCeiling);
    }
    double sum = 0.0;
    for (const double v : out.values) sum += v;
    out.mean = sum / static_cast<double>(q);
    auto sorted = out.values;
    std::sort(sorted.begin(), sorted.end());
    out.median = q % 2 ? sorted[q / 2] : 0.5 * (sorted[q / 2 - 1] + sorted[q / 2]);
    return out;
}

double weight_mass(std::span<const double> weights) {
    double s = 0.0;
    for (const double w : weights) s += std::abs(w);
    return s;
}

std::vector<double> delta_current(std::span<const double> power) {
    if (power.size() < 2) throw ParameterError("delta_current needs at least two cycles");
    std::vector<double> d(power.size() - 1);
    for (std::size_t i = 0; i + 1 < power.size(); ++i) d[i] = power[i + 1] - power[i];
    return d;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["nrmse"] = r.nrmse;
    j["nmae"] = r.nmae;
    j["r2"] = r.r2;
    j["pearson_r"] = r.pearson_r;
    j["n_points"] = r.n_points;
    return j.dump(2) + "\n";
}

}  // namespace apollo::metrics
