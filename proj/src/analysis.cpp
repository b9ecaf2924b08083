#include "cmr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmr/error.hpp"
#include "cmr/trace_store.hpp"

namespace cmr {

double snr_db(std::span<const double> d, std::span<const double> d_hat) {
  if (d.size() != d_hat.size()) throw InputError("snr: length mismatch");
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    signal += d[i] * d[i];
    const double e = d[i] - d_hat[i];
    noise += e * e;
  }
  if (signal == 0.0) throw InputError("snr: zero signal power");
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

double snr_db(const Vector& d, const Vector& d_hat) {
  return snr_db(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())),
                std::span<const double>(d_hat.data(), static_cast<std::size_t>(d_hat.size())));
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

std::vector<std::optional<double>> round_correlation(const ReadingTrace& trace) {
  std::vector<std::optional<double>> out;
  for (std::size_t t = 1; t < trace.n_rounds(); ++t) {
    const Vector prev = trace.round(t - 1);
    const Vector cur = trace.round(t);
    out.push_back(pearson(span_of(cur), span_of(prev)));
  }
  return out;
}

std::vector<std::optional<double>> increment_correlation(const ReadingTrace& trace) {
  std::vector<std::optional<double>> out;
  for (std::size_t t = 1; t < trace.n_rounds(); ++t) {
    const Vector prev = trace.round(t - 1);
    const Vector inc = trace.round(t) - prev;
    out.push_back(pearson(span_of(prev), span_of(inc)));
  }
  return out;
}

std::vector<double> defined_values(const std::vector<std::optional<double>>& series) {
  std::vector<double> out;
  for (const auto& v : series) {
    if (v) out.push_back(*v);
  }
  return out;
}

BoxplotStats boxplot_stats(std::span<const double> values) {
  if (values.empty()) throw InputError("boxplot_stats: empty input");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const auto quantile = [&s](double p) {
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  return {s.front(), quantile(0.25), quantile(0.5), quantile(0.75), s.back()};
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double ls_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mx = static_cast<double>(n - 1) / 2.0;
  const double my = mean(values);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mx;
    sxy += dx * (values[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace cmr
