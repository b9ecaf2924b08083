#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cmr/types.hpp"

namespace cmr {

class ReadingTrace;

/// Reconstruction SNR in dB: 10 log10(sum d^2 / sum (d - d_hat)^2).
/// Returns +infinity when d_hat == d. Throws InputError on a zero signal.
double snr_db(std::span<const double> d, std::span<const double> d_hat);
double snr_db(const Vector& d, const Vector& d_hat);

/// Pearson correlation; nullopt when either series has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// r(t) = pearson(d(t), d(t-1)) for t = 1..T-1 (entry t-1 of the result).
std::vector<std::optional<double>> round_correlation(const ReadingTrace& trace);

/// r(t) = pearson(d(t-1), d(t) - d(t-1)) for t = 1..T-1.
std::vector<std::optional<double>> increment_correlation(const ReadingTrace& trace);

/// Defined entries only.
std::vector<double> defined_values(const std::vector<std::optional<double>>& series);

struct BoxplotStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation between order statistics: the p-quantile
/// of n sorted values sits at position p * (n - 1).
BoxplotStats boxplot_stats(std::span<const double> values);

double mean(std::span<const double> values);

/// Least-squares slope of values[i] against i.
double ls_slope(std::span<const double> values);

}  // namespace cmr
