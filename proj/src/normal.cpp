/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qeikit/core.hpp"

namespace qeikit {

namespace {

// Hastings-type rational approximation for the lower-tail quantile,
// |error| < 4.5e-4; refined below.
double quantile_guess(double p_low) {
  double t = std::sqrt(-2.0 * std::log(p_low));
  return -(t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t));
}

}  // namespace

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ContractError("norm_quantile: p outside [0,1]");
  }
  bool flip = p > 0.5;
  double pl = flip ? 1.0 - p : p;
  double x = quantile_guess(pl);
  // Two Halley steps: cubic convergence takes the 4.5e-4 guess to ~1e-15.
  for (int it = 0; it < 2; ++it) {
    double f = norm_cdf(x) - pl;
    double d = norm_pdf(x);
    if (d <= 0.0) break;
    double r = f / d;
    x -= r / (1.0 + 0.5 * x * r);
  }
  return flip ? -x : x;
}

double truncated_upper_mean(double b) {
  if (b < -8.0) {
    // Asymptotic Mills ratio: E[U|U<=b] = b + 1/b - 2/b^3 + ...
    double ib = 1.0 / b;
    return b + ib * (1.0 - 2.0 * ib * ib);
  }
  double c = norm_cdf(b);
  if (c <= 0.0) return b;
  return -norm_pdf(b) / c;
}

namespace {

// Gauss-Legendre half-rules used by the bivariate quadrature.
const double gl_x6[3] = {0.9324695142031522, 0.6612093864662647,
                         0.2386191860831970};
const double gl_w6[3] = {0.1713244923791705, 0.3607615730481384,
                         0.4679139345726904};
const double gl_x12[6] = {0.9815606342467191, 0.9041172563704750,
                          0.7699026741943050, 0.5873179542866171,
                          0.3678314989981802, 0.1252334085114692};
const double gl_w12[6] = {0.04717533638651177, 0.1069393259953183,
                          0.1600783285433464,  0.2031674267230659,
                          0.2334925365383547,  0.2491470458134029};
const double gl_x20[10] = {0.9931285991850949,  0.9639719272779138,
                           0.9122344282513259,  0.8391169718222188,
                           0.7463319064601508,  0.6360536807265150,
                           0.5108670019508271,  0.3737060887154196,
                           0.2277858511416451,  0.07652652113349733};
const double gl_w20[10] = {0.01761400713915212, 0.04060142980038694,
                           0.06267204833410906, 0.08327674157670475,
                           0.1019301198172404,  0.1181945319615184,
                           0.1316886384491766,  0.1420961093183821,
                           0.1491729864726037,  0.1527533871307259};

// P(X > dh, Y > dk) for standard bivariate normal with correlation r.
// Drezner-Wesolowsky quadrature with the singular expansion for |r| near 1.
double bvn_upper(double dh, double dk, double r) {
  const double twopi = 6.283185307179586477;
  const double* gx;
  const double* gw;
  int ng;
  double ar = std::abs(r);
  if (ar < 0.3) {
    gx = gl_x6, gw = gl_w6, ng = 3;
  } else if (ar < 0.75) {
    gx = gl_x12, gw = gl_w12, ng = 6;
  } else {
    gx = gl_x20, gw = gl_w20, ng = 10;
  }

  double h = dh, k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    double hs = 0.5 * (h * h + k * k);
    double asr = std::asin(r);
    for (int i = 0; i < ng; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        double sn = std::sin(asr * 0.5 * (is * gx[i] + 1.0));
        bvn += gw[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / (2.0 * twopi) + norm_cdf(-h) * norm_cdf(-k);
    return bvn;
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    double bs = (h - k) * (h - k);
    double c = (4.0 - hk) / 8.0;
    double d = (12.0 - hk) / 16.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0)
      bvn = a * std::exp(asr) *
            (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
             c * d * as * as / 5.0);
    if (-hk < 100.0) {
      double b = std::sqrt(bs);
      bvn -= std::exp(-0.5 * hk) * std::sqrt(twopi) * norm_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a *= 0.5;
    for (int i = 0; i < 10; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        double xs = a * (is * gl_x20[i] + 1.0);
        xs *= xs;
        double rs = std::sqrt(1.0 - xs);
        double asr2 = -0.5 * (bs / xs + hk);
        if (asr2 > -100.0) {
          double sp = 1.0 + c * xs * (1.0 + d * xs);
          double ep = std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
          bvn += a * gl_w20[i] * std::exp(asr2) * (ep - sp);
        }
      }
    }
    bvn = -bvn / twopi;
  }
  if (r > 0.0) {
    bvn += norm_cdf(-std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) bvn += norm_cdf(k) - norm_cdf(h);
  }
  return bvn;
}

}  // namespace

double bvn_cdf(double h, double k, double r) {
  if (std::abs(r) >= 1.0 - 1e-15) {
    if (r > 0.0) return norm_cdf(std::min(h, k));
    return std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);
  }
  // Canonical argument order keeps the result invariant under (h,k) swap.
  if (h > k) std::swap(h, k);
  double v = bvn_upper(-h, -k, r);
  return std::min(1.0, std::max(0.0, v));
}

double bvn_pdf(double x1, double x2, double s11, double s12, double s22) {
  double det = s11 * s22 - s12 * s12;
  if (det <= 0.0) throw DegenerateCovariance("bvn_pdf: singular covariance");
  const double twopi = 6.283185307179586477;
  double q =
      (s22 * x1 * x1 - 2.0 * s12 * x1 * x2 + s11 * x2 * x2) / det;
  return std::exp(-0.5 * q) / (twopi * std::sqrt(det));
}

}  // namespace qeikit
