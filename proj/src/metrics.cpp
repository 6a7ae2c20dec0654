#include "tryon/metrics.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tryon/error.hpp"

namespace tryon {
using nlohmann::json;

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) sum += w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : w) v /= sum;
  return w;
}

// Valid separable filtering of a single plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

std::vector<double> luma_plane(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw InputError("ssim: expected 1 or 3 channels, got " + std::to_string(img.channels()));
  const Image l = to_luma(img);
  return {l.plane(0).begin(), l.plane(0).end()};
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
    throw InputError("ssim: dimension mismatch");
  if (a.height() < p.window || a.width() < p.window)
    throw InputError("ssim: image smaller than the " + std::to_string(p.window) + "px window");
  const int h = a.height(), w = a.width();
  const auto x = luma_plane(a);
  const auto y = luma_plane(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_window(p.window, p.sigma);
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  const double c1 = std::pow(p.k1 * p.data_range, 2), c2 = std::pow(p.k2 * p.data_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double masked_l1(const Image& pred, const Image& target, const SoftMask& mask) {
  if (pred.channels() != target.channels() || pred.height() != target.height() || pred.width() != target.width() ||
      pred.height() != mask.height() || pred.width() != mask.width())
    throw InputError("masked_l1: dimension mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    den += m;
    if (m == 0) continue;
    for (int c = 0; c < pred.channels(); ++c) num += m * std::abs(double(pred.plane(c)[i]) - target.plane(c)[i]);
  }
  return den == 0 ? 0.0 : num / (den * pred.channels());
}

MetricReport MetricReport::from_values(std::string name, std::vector<double> values, json params) {
  MetricReport r;
  r.name = std::move(name);
  r.params = std::move(params);
  r.per_frame = std::move(values);
  if (!r.per_frame.empty()) {
    const double n = static_cast<double>(r.per_frame.size());
    r.mean = std::accumulate(r.per_frame.begin(), r.per_frame.end(), 0.0) / n;
    double ss = 0;
    for (double v : r.per_frame) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / n);
  }
  return r;
}

json MetricReport::to_json() const {
  return {{"name", name}, {"params", params}, {"mean", mean}, {"stddev", stddev}, {"per_frame", per_frame}};
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.covariance.rows() != d || a.covariance.cols() != d || b.covariance.rows() != d ||
      b.covariance.cols() != d)
    throw InputError("frechet_distance: moment dimensions disagree");
  auto psd_sqrt = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  const Eigen::MatrixXd s1 = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = s1 * b.covariance * s1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double dist =
      (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, dist);
}

double video_metric(const std::vector<Image>& frames_a, const std::vector<Image>& frames_b,
                    VideoFeatureBackend* backend) {
  if (!backend) throw ConfigError("video metric needs a feature backend; none is bundled");
  return frechet_distance(backend->moments(frames_a), backend->moments(frames_b));
}

std::vector<MetricReport> evaluate_videos(FrameSource& pred, FrameSource& truth, const VideoEvalOptions& options) {
  for (const auto& m : options.metrics)
    if (m != "ssim" && m != "l1") throw ConfigError("unknown metric '" + m + "' (available: ssim, l1)");
  std::vector<double> ssims, l1s;
  while (true) {
    auto a = pred.next();
    auto b = truth.next();
    if (!a && !b) break;
    if (!a || !b) throw InputError("videos differ in length");
    Image pa = a->image, pb = b->image;
    if (options.compare_size) {
      pa = resize(pa, options.compare_size->second, options.compare_size->first);
      pb = resize(pb, options.compare_size->second, options.compare_size->first);
    }
    if (pa.height() != pb.height() || pa.width() != pb.width() || pa.channels() != pb.channels())
      throw InputError("frame " + std::to_string(a->id) + " differs in size between videos");
    for (const auto& m : options.metrics) {
      if (m == "ssim") ssims.push_back(ssim(pa, pb));
      if (m == "l1") l1s.push_back(masked_l1(pa, pb, SoftMask(pa.height(), pa.width(), 1.0f)));
    }
  }
  json params = json::object();
  if (options.compare_size) params["compare_size"] = {options.compare_size->first, options.compare_size->second};
  std::vector<MetricReport> out;
  for (const auto& m : options.metrics) {
    if (m == "ssim") {
      json p = params;
      p["window"] = 11;
      p["sigma"] = 1.5;
      out.push_back(MetricReport::from_values("ssim", ssims, p));
    } else {
      out.push_back(MetricReport::from_values("l1", l1s, params));
    }
  }
  return out;
}

}  // namespace tryon
