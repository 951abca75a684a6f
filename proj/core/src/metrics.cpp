#include "heintfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace heintfl::attack {

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;

  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

std::vector<Plane> channel_planes(const Tensor& t) {
  if (t.shape.size() != 3) throw std::invalid_argument("metrics: expected a (C,H,W) tensor");
  const int c = t.shape[0], h = t.shape[1], w = t.shape[2];
  std::vector<Plane> planes(static_cast<std::size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    planes[static_cast<std::size_t>(ci)].h = h;
    planes[static_cast<std::size_t>(ci)].w = w;
    planes[static_cast<std::size_t>(ci)].v.assign(
        t.values.begin() + static_cast<std::int64_t>(ci) * h * w,
        t.values.begin() + static_cast<std::int64_t>(ci + 1) * h * w);
  }
  return planes;
}

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw std::invalid_argument("metrics: image shape mismatch");
}

Plane downsample2(const Plane& p) {
  Plane out;
  out.h = p.h / 2;
  out.w = p.w / 2;
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.v[static_cast<std::size_t>(y) * out.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                  p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

std::vector<double> gaussian_kernel2d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
      k[static_cast<std::size_t>(y) * size + x] = std::exp(-d2 / (2.0 * sigma * sigma));
      sum += k[static_cast<std::size_t>(y) * size + x];
    }
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Weighted window statistics for all valid positions of a size x size kernel.
struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

template <typename Fn>
void for_each_window(const Plane& a, const Plane& b, const std::vector<double>& kernel, int size,
                     Fn&& fn) {
  for (int y = 0; y + size <= a.h; ++y) {
    for (int x = 0; x + size <= a.w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int u = 0; u < size; ++u) {
        for (int v = 0; v < size; ++v) {
          const double wg = kernel[static_cast<std::size_t>(u) * size + v];
          const double av = a.at(y + u, x + v);
          const double bv = b.at(y + u, x + v);
          ma += wg * av;
          mb += wg * bv;
          saa += wg * av * av;
          sbb += wg * bv * bv;
          sab += wg * av * bv;
        }
      }
      fn(WindowStats{ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb});
    }
  }
}

int default_msssim_scales(int min_dim) {
  int s = static_cast<int>(std::floor(std::log2(static_cast<double>(min_dim) / 8.0))) + 1;
  return std::clamp(s, 2, 5);
}

// Standard five-scale exponents; the prefix in use is renormalized to sum 1.
constexpr double kMsssimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

}  // namespace

double uqi(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  const auto pa = channel_planes(a);
  const auto pb = channel_planes(b);
  const int win = std::min({8, pa[0].h, pa[0].w});

  double sum = 0.0;
  std::int64_t used = 0;
  for (std::size_t c = 0; c < pa.size(); ++c) {
    const Plane& x = pa[c];
    const Plane& y = pb[c];
    const double n = static_cast<double>(win) * win;
    for (int i = 0; i + win <= x.h; ++i) {
      for (int j = 0; j + win <= x.w; ++j) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        bool identical = true;
        for (int u = 0; u < win; ++u) {
          for (int v = 0; v < win; ++v) {
            const double xv = x.at(i + u, j + v);
            const double yv = y.at(i + u, j + v);
            identical = identical && xv == yv;
            sx += xv;
            sy += yv;
            sxx += xv * xv;
            syy += yv * yv;
            sxy += xv * yv;
          }
        }
        const double mx = sx / n, my = sy / n;
        // unbiased second moments, as in the original index definition
        const double vx = (sxx - n * mx * mx) / (n - 1);
        const double vy = (syy - n * my * my) / (n - 1);
        const double cxy = (sxy - n * mx * my) / (n - 1);
        const double denom = (vx + vy) * (mx * mx + my * my);
        if (denom == 0.0) {
          if (identical) {
            sum += 1.0;
            ++used;
          }
          // otherwise the window carries no usable signal: skip
          continue;
        }
        // grouping mirrors the denominator so uqi(x,x) is exactly 1
        sum += 4.0 * (cxy * (mx * my)) / denom;
        ++used;
      }
    }
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

double msssim(const Tensor& a, const Tensor& b, const MsssimOptions& opts) {
  require_same_shape(a, b);
  auto pa = channel_planes(a);
  auto pb = channel_planes(b);
  const int min_dim = std::min(pa[0].h, pa[0].w);
  const int scales = opts.scales > 0 ? opts.scales : default_msssim_scales(min_dim);
  if (scales < 2 || scales > 5) {
    throw std::invalid_argument("msssim: scale count must be in [2,5]");
  }
  if (min_dim < 4 << (scales - 1)) {
    throw std::invalid_argument("msssim: image too small for the requested scales");
  }
  const double c1 = opts.k1 * opts.k1;
  const double c2 = opts.k2 * opts.k2;

  double weight_sum = 0.0;
  for (int s = 0; s < scales; ++s) weight_sum += kMsssimWeights[s];

  double total = 0.0;
  for (std::size_t ch = 0; ch < pa.size(); ++ch) {
    Plane x = pa[ch];
    Plane y = pb[ch];
    double log_score = 0.0;
    bool zeroed = false;
    for (int s = 0; s < scales; ++s) {
      const int win = std::min({opts.window, x.h, x.w});
      const auto kernel = gaussian_kernel2d(win, 1.5 * win / 11.0);
      double cs_sum = 0.0, lum_sum = 0.0;
      std::int64_t count = 0;
      for_each_window(x, y, kernel, win, [&](const WindowStats& st) {
        cs_sum += (2.0 * st.cov + c2) / (st.var_a + st.var_b + c2);
        lum_sum += (2.0 * st.mu_a * st.mu_b + c1) / (st.mu_a * st.mu_a + st.mu_b * st.mu_b + c1);
        ++count;
      });
      const double cs = cs_sum / static_cast<double>(count);
      const double weight = kMsssimWeights[s] / weight_sum;
      if (s == scales - 1) {
        const double lum = lum_sum / static_cast<double>(count);
        const double term = lum * cs;
        if (term <= 0.0) zeroed = true;
        else log_score += weight * std::log(term);
      } else {
        if (cs <= 0.0) zeroed = true;
        else log_score += weight * std::log(cs);
        x = downsample2(x);
        y = downsample2(y);
      }
      if (zeroed) break;
    }
    total += zeroed ? 0.0 : std::exp(log_score);
  }
  return total / static_cast<double>(pa.size());
}

double vif(const Tensor& reference, const Tensor& distorted, const VifOptions& opts) {
  require_same_shape(reference, distorted);
  auto pr = channel_planes(reference);
  auto pd = channel_planes(distorted);
  // standard noise variance is calibrated for 0..255 pixel values
  for (auto& p : pr)
    for (auto& v : p.v) v *= 255.0;
  for (auto& p : pd)
    for (auto& v : p.v) v *= 255.0;

  constexpr double kVarEps = 1e-10;
  double num = 0.0, den = 0.0;
  for (std::size_t ch = 0; ch < pr.size(); ++ch) {
    Plane r = pr[ch];
    Plane d = pd[ch];
    for (int s = 0; s < opts.scales; ++s) {
      const int nominal = (1 << (4 - std::min(s, 3))) + 1;  // 17, 9, 5, 3
      const int win = std::min({nominal, r.h, r.w});
      if (win < 3) break;
      const auto kernel = gaussian_kernel2d(win, win / 5.0);
      for_each_window(r, d, kernel, win, [&](const WindowStats& st) {
        const double var_r = std::max(st.var_a, 0.0);
        const double var_d = std::max(st.var_b, 0.0);
        double g, sv_sq;
        if (var_r < kVarEps || var_d < kVarEps) {
          g = 0.0;
          sv_sq = var_d;
        } else {
          g = st.cov / var_r;
          if (g < 0.0) {
            g = 0.0;
            sv_sq = var_d;
          } else {
            sv_sq = std::max(var_d - g * st.cov, 0.0);
          }
        }
        num += std::log(1.0 + g * g * var_r / (sv_sq + opts.noise_var));
        den += std::log(1.0 + var_r / opts.noise_var);
      });
      if (r.h / 2 < 3 || r.w / 2 < 3) break;
      r = downsample2(r);
      d = downsample2(d);
    }
  }
  if (den == 0.0) throw std::invalid_argument("vif: reference image carries no variance");
  return std::max(num / den, 0.0);
}

}  // namespace heintfl::attack
