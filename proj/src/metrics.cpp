// Copyright 2026 The previvor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "previvor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

#include "previvor/errors.hpp"
#include "previvor/nn/layers.hpp"

namespace previvor::metrics {

namespace {

void require_same_size(const RgbImage& a, const RgbImage& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                         " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

Eigen::MatrixXd luma(const RgbImage& img) {
  Eigen::MatrixXd y(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      y(r, c) = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
    }
  }
  return y;
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

// Separable valid-mode Gaussian filter.
Eigen::MatrixXd gaussian_valid(const Eigen::MatrixXd& x, const Eigen::VectorXd& g) {
  const int H = static_cast<int>(x.rows()) - kWindow + 1, W = static_cast<int>(x.cols()) - kWindow + 1;
  Eigen::MatrixXd rows_pass(x.rows(), W);
  for (int c = 0; c < W; ++c) rows_pass.col(c) = x.middleCols(c, kWindow) * g;
  Eigen::MatrixXd out(H, W);
  for (int r = 0; r < H; ++r) out.row(r) = g.transpose() * rows_pass.middleRows(r, kWindow);
  return out;
}

std::string fmt(double v, int precision) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& m, std::size_t n) {
  if (m.size() != n) throw DimensionError("covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  Eigen::MatrixXd out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (m[i].size() != n) throw DimensionError("covariance must be square");
    for (std::size_t j = 0; j < n; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_eigen(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                     const Eigen::MatrixXd& cov_b, double eps) {
  const auto n = mu_a.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd A = cov_a + eps * I, B = cov_b + eps * I;
  // tr((AB)^1/2) equals tr((A^1/2 B A^1/2)^1/2), whose argument is symmetric.
  const Eigen::MatrixXd ra = psd_sqrt(A);
  const double cross = psd_sqrt(ra * B * ra).trace();
  const double d = (mu_a - mu_b).squaredNorm() + A.trace() + B.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

void gaussian_fit(const Embeddings& e, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  if (e.empty()) throw EmptyInputError("FID needs a non-empty embedding set");
  const std::size_t d = e[0].size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(e.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i].size() != d) throw DimensionError("embeddings have inconsistent dimensions");
    for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[i][j];
  }
  mu = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - mu.transpose();
  cov = e.size() > 1 ? Eigen::MatrixXd((C.transpose() * C) / static_cast<double>(e.size() - 1))
                     : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
}

}  // namespace

double psnr(const RgbImage& a, const RgbImage& b) {
  require_same_size(a, b, "psnr");
  const auto pa = a.pixels(), pb = b.pixels();
  if (pa.empty()) throw EmptyInputError("psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(pa.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const RgbImage& a, const RgbImage& b) {
  require_same_size(a, b, "ssim");
  if (a.width() < kWindow || a.height() < kWindow) {
    throw DimensionError("ssim needs images of at least 11x11, got " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()));
  }
  Eigen::VectorXd g(kWindow);
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    g(i) = std::exp(-x * x / (2.0 * kSigma * kSigma));
  }
  g /= g.sum();
  const Eigen::MatrixXd x = luma(a), y = luma(b);
  const Eigen::MatrixXd mx = gaussian_valid(x, g), my = gaussian_valid(y, g);
  const Eigen::MatrixXd sxx = gaussian_valid(x.cwiseProduct(x), g) - mx.cwiseProduct(mx);
  const Eigen::MatrixXd syy = gaussian_valid(y.cwiseProduct(y), g) - my.cwiseProduct(my);
  const Eigen::MatrixXd sxy = gaussian_valid(x.cwiseProduct(y), g) - mx.cwiseProduct(my);
  const double C1 = std::pow(0.01 * 255.0, 2), C2 = std::pow(0.03 * 255.0, 2);
  const Eigen::ArrayXXd num = (2.0 * mx.cwiseProduct(my).array() + C1) * (2.0 * sxy.array() + C2);
  const Eigen::ArrayXXd den = (mx.array().square() + my.array().square() + C1) * (sxx.array() + syy.array() + C2);
  return (num / den).mean();
}

double colorfulness(const RgbImage& img) {
  const auto p = img.pixels();
  const std::size_t n = p.size() / 3;
  if (n == 0) return 0.0;
  double s_rg = 0, s_yb = 0, q_rg = 0, q_yb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double R = p[3 * i], G = p[3 * i + 1], B = p[3 * i + 2];
    const double rg = R - G, yb = 0.5 * (R + G) - B;
    s_rg += rg;
    s_yb += yb;
    q_rg += rg * rg;
    q_yb += yb * yb;
  }
  const double N = static_cast<double>(n);
  const double mu_rg = s_rg / N, mu_yb = s_yb / N;
  const double var_rg = std::max(0.0, q_rg / N - mu_rg * mu_rg);
  const double var_yb = std::max(0.0, q_yb / N - mu_yb * mu_yb);
  return std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

double delta_colorfulness(const RgbImage& a, const RgbImage& b) { return std::abs(colorfulness(a) - colorfulness(b)); }

RgbImage apply_mask_policy(const RgbImage& img, const PriorMask& mask) {
  if (mask.rows() != img.height() || mask.cols() != img.width()) {
    throw DimensionError("mask " + std::to_string(mask.cols()) + "x" + std::to_string(mask.rows()) +
                         " does not match image " + std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  RgbImage out = img;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      if (!mask(r, c)) {
        for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = 0;
      }
    }
  }
  return out;
}

const char* to_string(MaskPolicy p) noexcept { return p == MaskPolicy::prior_mask ? "prior_mask" : "none"; }

std::optional<MaskPolicy> mask_policy_from_string(const std::string& s) noexcept {
  if (s == "none") return MaskPolicy::none;
  if (s == "prior_mask") return MaskPolicy::prior_mask;
  return std::nullopt;
}

// ---------------------------------------------------------------- embeddings

std::string FeatureExtractorSpec::identity() const {
  if (kind == Kind::external) return "external(" + table.filename().string() + ")";
  return nn::RandomConvPyramid(3, seed, channels).identity() + "+gap";
}

nlohmann::json FeatureExtractorSpec::to_json() const {
  nlohmann::json j{{"identity", identity()}};
  if (kind == Kind::external) {
    j["kind"] = "external";
    j["table"] = table.string();
  } else {
    j["kind"] = "random_conv_pyramid";
    j["seed"] = seed;
    j["channels"] = channels;
  }
  return j;
}

FeatureEmbedder::FeatureEmbedder(FeatureExtractorSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind == FeatureExtractorSpec::Kind::random_conv_pyramid) {
    for (auto c : spec_.channels) dim_ += c;
    if (dim_ == 0) throw ConfigError("feature extractor needs at least one channel");
    return;
  }
  std::ifstream in(spec_.table);
  if (!in) throw IoError("cannot open embedding table " + spec_.table.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string key, cell;
    std::getline(ss, key, ',');
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(spec_.table.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (v.empty()) throw IoError(spec_.table.string() + ":" + std::to_string(lineno) + ": no values");
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw IoError(spec_.table.string() + ":" + std::to_string(lineno) + ": inconsistent width");
    table_[key] = std::move(v);
  }
  if (table_.empty()) throw EmptyInputError("embedding table " + spec_.table.string() + " is empty");
}

std::vector<double> FeatureEmbedder::embed(const RgbImage& img, const std::string& key) const {
  if (spec_.kind == FeatureExtractorSpec::Kind::external) {
    auto it = table_.find(key);
    if (it == table_.end()) throw StateError("no external embedding for '" + key + "'");
    return it->second;
  }
  nn::NoGradGuard ng;
  const nn::RandomConvPyramid net(3, spec_.seed, spec_.channels);
  const std::size_t H = static_cast<std::size_t>(img.height()), W = static_cast<std::size_t>(img.width());
  std::vector<double> x(3 * H * W);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        x[ch * H * W + r * W + c] = img.at(static_cast<int>(r), static_cast<int>(c), static_cast<int>(ch)) / 127.5 - 1.0;
      }
    }
  }
  std::vector<double> out;
  out.reserve(dim_);
  for (const auto& f : net.features(nn::Tensor::from({1, 3, H, W}, std::move(x)))) {
    const std::size_t C = f.dim(1), hw = f.dim(2) * f.dim(3);
    const auto d = f.data();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += d[c * hw + i];
      out.push_back(s / static_cast<double>(hw));
    }
  }
  return out;
}

double frechet_distance(const std::vector<double>& mu_a, const std::vector<std::vector<double>>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<std::vector<double>>& cov_b, double eps) {
  const std::size_t n = mu_a.size();
  if (n == 0 || mu_b.size() != n) throw DimensionError("Gaussian means must be non-empty and of equal length");
  const Eigen::VectorXd ma = Eigen::Map<const Eigen::VectorXd>(mu_a.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd mb = Eigen::Map<const Eigen::VectorXd>(mu_b.data(), static_cast<Eigen::Index>(n));
  return frechet_eigen(ma, to_matrix(cov_a, n), mb, to_matrix(cov_b, n), eps);
}

double frechet_distance(const Embeddings& a, const Embeddings& b, double eps) {
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  gaussian_fit(a, ma, ca);
  gaussian_fit(b, mb, cb);
  if (ma.size() != mb.size()) throw DimensionError("embedding sets have different dimensions");
  return frechet_eigen(ma, ca, mb, cb, eps);
}

double fid(const std::vector<RgbImage>& set_a, const std::vector<RgbImage>& set_b, const FeatureExtractorSpec& spec,
           const std::vector<std::string>& keys_a, const std::vector<std::string>& keys_b) {
  if (set_a.empty() || set_b.empty()) throw EmptyInputError("FID needs two non-empty image sets");
  const FeatureEmbedder emb(spec);
  auto embed_all = [&](const std::vector<RgbImage>& set, const std::vector<std::string>& keys) {
    if (!keys.empty() && keys.size() != set.size()) throw DimensionError("one embedding key per image required");
    Embeddings out;
    for (std::size_t i = 0; i < set.size(); ++i) out.push_back(emb.embed(set[i], keys.empty() ? std::string{} : keys[i]));
    return out;
  };
  return frechet_distance(embed_all(set_a, keys_a), embed_all(set_b, keys_b));
}

// ---------------------------------------------------------------- reports

std::optional<double> MetricReport::mean_psnr() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.psnr) {
      s += *r.psnr;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::optional<double> MetricReport::mean_ssim() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.ssim) {
      s += *r.ssim;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::size_t MetricReport::infinite_psnr_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const ImageRow& r) { return r.psnr && std::isinf(*r.psnr); }));
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == EvalMode::paired ? "paired" : "unpaired";
  j["mask_policy"] = to_string(mask_policy);
  j["pred_count"] = pred_count;
  j["ref_count"] = ref_count;
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"name", r.name},
                       {"colorfulness_pred", r.colorfulness_pred},
                       {"colorfulness_ref", r.colorfulness_ref},
                       {"delta_colorfulness", r.delta_colorfulness}};
    if (r.psnr) row["psnr"] = number_or_inf(*r.psnr);
    if (r.ssim) row["ssim"] = *r.ssim;
    rs.push_back(row);
  }
  j["images"] = rs;
  nlohmann::json summary;
  if (auto p = mean_psnr()) summary["psnr"] = number_or_inf(*p);
  if (auto s = mean_ssim()) summary["ssim"] = *s;
  if (mean_delta_colorfulness) summary["delta_colorfulness"] = *mean_delta_colorfulness;
  summary["delta_colorfulness_set"] = set_delta_colorfulness;
  summary["infinite_psnr_count"] = infinite_psnr_count();
  if (fid) summary["fid"] = *fid;
  summary["lpips"] = "unavailable";
  j["summary"] = summary;
  j["feature_extractor"] = feature_extractor;
  j["provenance"] = provenance;
  return j;
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << "mode: " << (mode == EvalMode::paired ? "paired" : "unpaired") << "   mask policy: " << to_string(mask_policy)
     << "\n\n";
  if (mode == EvalMode::paired) {
    std::size_t w = 5;
    for (const auto& r : rows) w = std::max(w, r.name.size());
    os << std::left << std::setw(static_cast<int>(w)) << "image" << std::right << std::setw(10) << "PSNR" << std::setw(10)
       << "SSIM" << std::setw(14) << "dColorful" << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::setw(10)
         << (r.psnr ? fmt(*r.psnr, 2) : "-") << std::setw(10) << (r.ssim ? fmt(*r.ssim, 4) : "-") << std::setw(14)
         << fmt(r.delta_colorfulness, 2) << "\n";
    }
    os << "\n";
  }
  os << std::left << std::setw(24) << "metric" << std::right << std::setw(12) << "value" << "\n";
  auto line = [&](const std::string& k, const std::string& v) {
    os << std::left << std::setw(24) << k << std::right << std::setw(12) << v << "\n";
  };
  if (auto p = mean_psnr()) line("PSNR (dB)", fmt(*p, 2));
  if (auto s = mean_ssim()) line("SSIM", fmt(*s, 4));
  if (mean_delta_colorfulness) line("dColorfulness", fmt(*mean_delta_colorfulness, 2));
  line("dColorfulness (set)", fmt(set_delta_colorfulness, 2));
  if (fid) line("FID", fmt(*fid, 2));
  line("LPIPS", "unavailable");
  if (!feature_extractor.empty()) os << "\nfeatures: " << feature_extractor << "\n";
  return os.str();
}

void require_comparable_fid(const MetricReport& a, const MetricReport& b) {
  if (a.feature_extractor != b.feature_extractor) {
    throw ConfigError("FID values come from different feature extractors: '" + a.feature_extractor + "' vs '" +
                      b.feature_extractor + "'");
  }
}

MetricReport evaluate(const std::vector<NamedImage>& pred, const std::vector<NamedImage>& ref, EvalMode mode,
                      MaskPolicy policy, const std::vector<PriorMask>& masks, const FeatureExtractorSpec& spec) {
  if (pred.empty() || ref.empty()) throw EmptyInputError("evaluate needs non-empty prediction and reference sets");
  if (mode == EvalMode::paired && pred.size() != ref.size()) {
    throw PairingError("paired evaluation: " + std::to_string(pred.size()) + " predictions vs " +
                       std::to_string(ref.size()) + " references");
  }
  if (policy == MaskPolicy::prior_mask && (masks.size() != pred.size() || masks.size() != ref.size())) {
    throw PairingError("prior_mask policy needs one mask per prediction and reference");
  }
  auto masked = [&](const std::vector<NamedImage>& set) {
    std::vector<RgbImage> out;
    for (std::size_t i = 0; i < set.size(); ++i) {
      out.push_back(policy == MaskPolicy::prior_mask ? apply_mask_policy(set[i].image, masks[i]) : set[i].image);
    }
    return out;
  };
  const std::vector<RgbImage> P = masked(pred), R = masked(ref);

  MetricReport rep;
  rep.mode = mode;
  rep.mask_policy = policy;
  rep.pred_count = P.size();
  rep.ref_count = R.size();
  double cp = 0.0, cr = 0.0;
  std::vector<double> col_p, col_r;
  for (const auto& im : P) col_p.push_back(colorfulness(im));
  for (const auto& im : R) col_r.push_back(colorfulness(im));
  for (double v : col_p) cp += v;
  for (double v : col_r) cr += v;
  rep.set_delta_colorfulness = std::abs(cp / static_cast<double>(P.size()) - cr / static_cast<double>(R.size()));

  if (mode == EvalMode::paired) {
    double sum = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      require_same_size(P[i], R[i], ("pair '" + pred[i].name + "'").c_str());
      ImageRow row;
      row.name = pred[i].name;
      row.psnr = psnr(P[i], R[i]);
      row.ssim = ssim(P[i], R[i]);
      row.colorfulness_pred = col_p[i];
      row.colorfulness_ref = col_r[i];
      row.delta_colorfulness = std::abs(col_p[i] - col_r[i]);
      sum += row.delta_colorfulness;
      rep.rows.push_back(row);
    }
    rep.mean_delta_colorfulness = sum / static_cast<double>(P.size());
  } else {
    std::vector<std::string> kp, kr;
    for (const auto& n : pred) kp.push_back(n.name);
    for (const auto& n : ref) kr.push_back(n.name);
    rep.fid = fid(P, R, spec, kp, kr);
    rep.feature_extractor = spec.identity();
  }
  return rep;
}

}  // namespace previvor::metrics
