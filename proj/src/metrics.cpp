#include "cloudfill/metrics.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace cloudfill::metrics {

namespace {
constexpr double kPsnrCap = 99.0;
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  double sum = 0;
  int half = kWindow / 2;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - half;
    k[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur of a single channel, "valid" region only.
std::vector<double> blur_valid(const std::vector<double>& src, int w, int h,
                               int& ow, int& oh) {
  static const std::vector<double> k = gaussian_kernel();
  int half = kWindow / 2;
  ow = w - 2 * half;
  oh = h - 2 * half;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * src[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  return out;
}
}  // namespace

double psnr(const Image& a, const Image& b, const std::optional<MaskImage>& region) {
  require_same_size(a, b, "psnr");
  size_t n = 0;
  double se = 0;
  for (size_t i = 0; i < a.data.size() / 3; ++i) {
    if (region) {
      if (i == 0) require_same_size(a, *region, "psnr");
      if (!region->values[i]) continue;
    }
    for (int c = 0; c < 3; ++c) {
      double d = static_cast<double>(a.data[i * 3 + c]) - b.data[i * 3 + c];
      se += d * d;
    }
    ++n;
  }
  if (n == 0) throw ConfigError("psnr: empty evaluation region");
  double mse = se / (3.0 * static_cast<double>(n));
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b, "ssim");
  if (a.width < kWindow || a.height < kWindow)
    throw ConfigError("ssim: image smaller than the filter window");

  double total = 0;
  for (int c = 0; c < 3; ++c) {
    size_t npix = static_cast<size_t>(a.width) * a.height;
    std::vector<double> xa(npix), xb(npix), xaa(npix), xbb(npix), xab(npix);
    for (size_t i = 0; i < npix; ++i) {
      double va = a.data[i * 3 + c], vb = b.data[i * 3 + c];
      xa[i] = va;
      xb[i] = vb;
      xaa[i] = va * va;
      xbb[i] = vb * vb;
      xab[i] = va * vb;
    }
    int ow, oh;
    auto mu_a = blur_valid(xa, a.width, a.height, ow, oh);
    auto mu_b = blur_valid(xb, a.width, a.height, ow, oh);
    auto m_aa = blur_valid(xaa, a.width, a.height, ow, oh);
    auto m_bb = blur_valid(xbb, a.width, a.height, ow, oh);
    auto m_ab = blur_valid(xab, a.width, a.height, ow, oh);
    double acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = m_aa[i] - ma * ma;
      double vb = m_bb[i] - mb * mb;
      double cov = m_ab[i] - ma * mb;
      acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / 3.0;
}

std::string EvalReport::csv_header() const {
  return "scene,seed,psnr_full,psnr_masked,ssim_full,pixels_full,pixels_masked";
}

std::string EvalReport::csv_row() const {
  std::ostringstream s;
  s.precision(10);
  s << scene_id << "," << seed << "," << psnr_full << "," << psnr_masked << ","
    << ssim_full << "," << pixels_full << "," << pixels_masked;
  return s.str();
}

std::string EvalReport::pretty() const {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed;
  s << "scene " << scene_id << " (seed " << seed << ")\n"
    << "  PSNR full   : " << psnr_full << " dB over " << pixels_full << " px\n"
    << "  PSNR masked : " << psnr_masked << " dB over " << pixels_masked << " px\n"
    << "  SSIM full   : " << ssim_full << "\n";
  return s.str();
}

}  // namespace cloudfill::metrics
