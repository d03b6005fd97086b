#include "cloudfill/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>

namespace cloudfill::dualnet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void init_linear(Param& W, Rng& rng) {
  double s = std::sqrt(2.0 / static_cast<double>(W.value.rows() + W.value.cols()));
  for (int i = 0; i < W.value.rows(); ++i)
    for (int j = 0; j < W.value.cols(); ++j) W.value(i, j) = rng.normal(0.0, s);
}

// -inf bias matrix from the boolean permission mask.
Mat mask_bias(const AttentionMask& mask) {
  int n = 2 * mask.L;
  Mat b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = mask.at(i, j) ? 0.0 : kNegInf;
  return b;
}

// Rowwise masked softmax; -inf entries get exactly zero weight.
Mat masked_softmax(const Mat& scores) {
  Mat p(scores.rows(), scores.cols());
  for (int i = 0; i < scores.rows(); ++i) {
    double mx = kNegInf;
    for (int j = 0; j < scores.cols(); ++j) mx = std::max(mx, scores(i, j));
    double sum = 0;
    for (int j = 0; j < scores.cols(); ++j) {
      double e = scores(i, j) == kNegInf ? 0.0 : std::exp(scores(i, j) - mx);
      p(i, j) = e;
      sum += e;
    }
    p.row(i) /= sum;
  }
  return p;
}

// Multi-head scaled dot-product core; caches per-head softmax matrices.
// When diag_gate is set and the rows hold two streams of `split` tokens,
// gate(h) is added to the logit of target row i attending to cloud row
// split + i before the softmax.
Mat mha_forward(const Mat& Q, const Mat& K, const Mat& V, int heads,
                const Mat& bias, std::vector<Mat>* p_cache,
                const Mat* diag_gate = nullptr, int split = 0) {
  int dim = static_cast<int>(Q.cols());
  int dh = dim / heads;
  Mat out(Q.rows(), dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  bool gated = diag_gate && split > 0 && Q.rows() == 2 * split;
  for (int h = 0; h < heads; ++h) {
    Mat qh = Q.middleCols(h * dh, dh);
    Mat kh = K.middleCols(h * dh, dh);
    Mat vh = V.middleCols(h * dh, dh);
    Mat s = (qh * kh.transpose()) * scale + bias;
    if (gated)
      for (int i = 0; i < split; ++i) s(i, split + i) += (*diag_gate)(0, h);
    Mat p = masked_softmax(s);
    out.middleCols(h * dh, dh) = p * vh;
    if (p_cache) p_cache->push_back(std::move(p));
  }
  return out;
}

struct LinearLayer {
  Param W, b;
  Mat x_cache;

  LinearLayer(const std::string& name, int in, int out)
      : W(name + ".W", in, out), b(name + ".b", 1, out) {}

  void init(Rng& rng) { init_linear(W, rng); }

  Mat forward(const Mat& x) {
    x_cache = x;
    return (x * W.value).rowwise() + b.value.row(0);
  }

  Mat backward(const Mat& gy) {
    W.grad += x_cache.transpose() * gy;
    b.grad.row(0) += gy.colwise().sum();
    return gy * W.value.transpose();
  }

  void collect(std::vector<Param*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

struct LayerNormLayer {
  static constexpr double kEps = 1e-5;
  Param gamma, beta;
  Mat xhat_cache;
  Vec inv_std_cache;

  LayerNormLayer(const std::string& name, int dim)
      : gamma(name + ".gamma", 1, dim), beta(name + ".beta", 1, dim) {
    gamma.value.setOnes();
  }

  Mat forward(const Mat& x) {
    int d = static_cast<int>(x.cols());
    xhat_cache.resize(x.rows(), d);
    inv_std_cache.resize(x.rows());
    Mat y(x.rows(), d);
    for (int i = 0; i < x.rows(); ++i) {
      double mu = x.row(i).mean();
      double var = (x.row(i).array() - mu).square().mean();
      double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_cache(i) = inv;
      xhat_cache.row(i) = (x.row(i).array() - mu) * inv;
      y.row(i) = xhat_cache.row(i).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
    }
    return y;
  }

  Mat backward(const Mat& gy) {
    int d = static_cast<int>(gy.cols());
    Mat gx(gy.rows(), d);
    for (int i = 0; i < gy.rows(); ++i) {
      Eigen::RowVectorXd gxhat = gy.row(i).cwiseProduct(gamma.value.row(0));
      double m1 = gxhat.mean();
      double m2 = gxhat.cwiseProduct(xhat_cache.row(i)).mean();
      gx.row(i) = inv_std_cache(i) *
                  (gxhat.array() - m1 - xhat_cache.row(i).array() * m2);
      gamma.grad.row(0) += gy.row(i).cwiseProduct(xhat_cache.row(i));
      beta.grad.row(0) += gy.row(i);
    }
    return gx;
  }

  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Applies the target layer to rows [0, split) and, when a separate cloud
// copy exists, the cloud layer to the rest; otherwise the target layer
// covers all rows.
struct DualLinear {
  LinearLayer target;
  std::optional<LinearLayer> cloud;

  DualLinear(const std::string& name, int in, int out, bool separate)
      : target(name, in, out) {
    if (separate) cloud.emplace(name + ".cloud", in, out);
  }

  void init(Rng& rng) {
    target.init(rng);
    if (cloud) cloud->init(rng);
  }

  Mat forward(const Mat& x, int split) {
    if (!cloud || x.rows() <= split) return target.forward(x);
    Mat y(x.rows(), target.W.value.cols());
    y.topRows(split) = target.forward(x.topRows(split));
    y.bottomRows(x.rows() - split) = cloud->forward(x.bottomRows(x.rows() - split));
    return y;
  }

  Mat backward(const Mat& gy, int split) {
    if (!cloud || gy.rows() <= split) return target.backward(gy);
    Mat gx(gy.rows(), target.W.value.rows());
    gx.topRows(split) = target.backward(gy.topRows(split));
    gx.bottomRows(gy.rows() - split) = cloud->backward(gy.bottomRows(gy.rows() - split));
    return gx;
  }

  void collect(std::vector<Param*>& out) {
    target.collect(out);
    if (cloud) cloud->collect(out);
  }
};

struct DualLayerNorm {
  LayerNormLayer target;
  std::optional<LayerNormLayer> cloud;

  DualLayerNorm(const std::string& name, int dim, bool separate) : target(name, dim) {
    if (separate) cloud.emplace(name + ".cloud", dim);
  }

  Mat forward(const Mat& x, int split) {
    if (!cloud || x.rows() <= split) return target.forward(x);
    Mat y(x.rows(), x.cols());
    y.topRows(split) = target.forward(x.topRows(split));
    y.bottomRows(x.rows() - split) = cloud->forward(x.bottomRows(x.rows() - split));
    return y;
  }

  Mat backward(const Mat& gy, int split) {
    if (!cloud || gy.rows() <= split) return target.backward(gy);
    Mat gx(gy.rows(), gy.cols());
    gx.topRows(split) = target.backward(gy.topRows(split));
    gx.bottomRows(gy.rows() - split) = cloud->backward(gy.bottomRows(gy.rows() - split));
    return gx;
  }

  void collect(std::vector<Param*>& out) {
    target.collect(out);
    if (cloud) cloud->collect(out);
  }
};

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
}

Mat gelu_grad(const Mat& x) {
  return x.unaryExpr([](double v) {
    double phi = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
    double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
    return phi + v * pdf;
  });
}

struct AttentionLayer {
  DualLinear qkv;
  DualLinear proj;
  // learned per-head logit bias on the target-to-cloud diagonal; a positive
  // start makes the cross-stream path visible to the optimizer immediately
  // instead of waiting for it to emerge from near-uniform attention
  std::optional<Param> gate;
  int heads;
  Mat Q, K, V;
  std::vector<Mat> p_cache;

  AttentionLayer(const std::string& name, int dim, int heads, bool separate,
                 bool gated)
      : qkv(name + ".qkv", dim, 3 * dim, separate),
        proj(name + ".proj", dim, dim, separate),
        heads(heads) {
    if (gated) {
      gate.emplace(name + ".gate", 1, heads);
      gate->value.setConstant(3.0);
    }
  }

  void init(Rng& rng) {
    qkv.init(rng);
    proj.init(rng);
  }

  Mat forward(const Mat& x, const Mat& bias, int split) {
    int dim = static_cast<int>(x.cols());
    Mat qkv_out = qkv.forward(x, split);
    Q = qkv_out.leftCols(dim);
    K = qkv_out.middleCols(dim, dim);
    V = qkv_out.rightCols(dim);
    p_cache.clear();
    Mat o = mha_forward(Q, K, V, heads, bias, &p_cache,
                        gate ? &gate->value : nullptr, split);
    return proj.forward(o, split);
  }

  Mat backward(const Mat& gy, int split) {
    int dim = static_cast<int>(gy.cols());
    int dh = dim / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat go = proj.backward(gy, split);
    Mat gQ = Mat::Zero(Q.rows(), dim);
    Mat gK = Mat::Zero(Q.rows(), dim);
    Mat gV = Mat::Zero(Q.rows(), dim);
    for (int h = 0; h < heads; ++h) {
      const Mat& p = p_cache[h];
      Mat goh = go.middleCols(h * dh, dh);
      Mat vh = V.middleCols(h * dh, dh);
      Mat gp = goh * vh.transpose();
      gV.middleCols(h * dh, dh) = p.transpose() * goh;
      // softmax backward; blocked entries have p == 0, so their grads vanish
      Vec rowdot = (gp.array() * p.array()).rowwise().sum();
      Mat gs = (p.array() * (gp.array().colwise() - rowdot.array())).matrix();
      if (gate && Q.rows() == 2 * split)
        for (int i = 0; i < split; ++i) gate->grad(0, h) += gs(i, split + i);
      gQ.middleCols(h * dh, dh) = gs * K.middleCols(h * dh, dh) * scale;
      gK.middleCols(h * dh, dh) = gs.transpose() * Q.middleCols(h * dh, dh) * scale;
    }
    Mat gqkv(Q.rows(), 3 * dim);
    gqkv.leftCols(dim) = gQ;
    gqkv.middleCols(dim, dim) = gK;
    gqkv.rightCols(dim) = gV;
    return qkv.backward(gqkv, split);
  }

  void collect(std::vector<Param*>& out) {
    qkv.collect(out);
    proj.collect(out);
    if (gate) out.push_back(&*gate);
  }
};

struct Block {
  DualLayerNorm ln1, ln2;
  AttentionLayer attn;
  DualLinear fc1, fc2;
  Mat fc1_out_cache;

  Block(const std::string& name, int dim, int heads, bool separate, bool gated)
      : ln1(name + ".ln1", dim, separate),
        ln2(name + ".ln2", dim, separate),
        attn(name + ".attn", dim, heads, separate, gated),
        fc1(name + ".fc1", dim, 4 * dim, separate),
        fc2(name + ".fc2", 4 * dim, dim, separate) {}

  void init(Rng& rng) {
    attn.init(rng);
    fc1.init(rng);
    fc2.init(rng);
  }

  Mat forward(const Mat& x, const Mat& bias, int split) {
    Mat h = x + attn.forward(ln1.forward(x, split), bias, split);
    fc1_out_cache = fc1.forward(ln2.forward(h, split), split);
    return h + fc2.forward(gelu(fc1_out_cache), split);
  }

  Mat backward(const Mat& gy, int split) {
    Mat g_mid = fc2.backward(gy, split);
    g_mid = g_mid.cwiseProduct(gelu_grad(fc1_out_cache));
    Mat gh = gy + ln2.backward(fc1.backward(g_mid, split), split);
    Mat ga = attn.backward(gh, split);
    return gh + ln1.backward(ga, split);
  }

  void collect(std::vector<Param*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

Eigen::RowVectorXd sinusoidal_embedding(int t, int dim) {
  Eigen::RowVectorXd e(dim);
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / half);
    e(2 * i) = std::sin(t * freq);
    e(2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Mat silu_grad(const Mat& x) {
  return x.unaryExpr([](double v) {
    double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  });
}

}  // namespace

void DenoiserConfig::validate() const {
  if (patch < 1) throw ConfigError("denoiser: patch size must be >= 1");
  if (dim < 1 || heads < 1 || dim % heads)
    throw ConfigError("denoiser: dim must be a positive multiple of heads");
  if (blocks < 1) throw ConfigError("denoiser: need at least one block");
  if (temb_dim < 2 || temb_dim % 2)
    throw ConfigError("denoiser: timestep embedding dim must be even and >= 2");
  if (T < 1) throw ConfigError("denoiser: T must be >= 1");
  if (beta_start <= 0 || beta_end >= 1 || beta_start > beta_end)
    throw ConfigError("denoiser: need 0 < beta_start <= beta_end < 1");
  if (cloud_concat && use_cloud_branch)
    throw ConfigError("denoiser: cloud_concat requires use_cloud_branch=false");
}

io::KeyValues DenoiserConfig::to_kv() const {
  io::KeyValues kv;
  kv.set_int("model.patch", patch);
  kv.set_int("model.dim", dim);
  kv.set_int("model.heads", heads);
  kv.set_int("model.blocks", blocks);
  kv.set_int("model.temb_dim", temb_dim);
  kv.set_int("model.T", T);
  kv.set_double("model.beta_start", beta_start);
  kv.set_double("model.beta_end", beta_end);
  kv.set("model.use_cloud_branch", use_cloud_branch ? "true" : "false");
  kv.set("model.cloud_concat", cloud_concat ? "true" : "false");
  kv.set("model.separate_cloud_weights", separate_cloud_weights ? "true" : "false");
  kv.set("model.jsa_mode", jsa_mode == JsaMode::MaskedAsymmetric ? "masked_asym"
                           : jsa_mode == JsaMode::MaskedSymmetric ? "masked_sym"
                                                                  : "full");
  return kv;
}

DenoiserConfig DenoiserConfig::from_kv(const io::KeyValues& kv) {
  DenoiserConfig c;
  c.patch = static_cast<int>(kv.get_int("model.patch", c.patch));
  c.dim = static_cast<int>(kv.get_int("model.dim", c.dim));
  c.heads = static_cast<int>(kv.get_int("model.heads", c.heads));
  c.blocks = static_cast<int>(kv.get_int("model.blocks", c.blocks));
  c.temb_dim = static_cast<int>(kv.get_int("model.temb_dim", c.temb_dim));
  c.T = static_cast<int>(kv.get_int("model.T", c.T));
  c.beta_start = kv.get_double("model.beta_start", c.beta_start);
  c.beta_end = kv.get_double("model.beta_end", c.beta_end);
  c.use_cloud_branch = kv.get_bool("model.use_cloud_branch", c.use_cloud_branch);
  c.cloud_concat = kv.get_bool("model.cloud_concat", c.cloud_concat);
  c.separate_cloud_weights =
      kv.get_bool("model.separate_cloud_weights", c.separate_cloud_weights);
  std::string jsa = kv.get("model.jsa_mode", "masked_asym");
  if (jsa == "masked_asym") c.jsa_mode = JsaMode::MaskedAsymmetric;
  else if (jsa == "masked_sym") c.jsa_mode = JsaMode::MaskedSymmetric;
  else if (jsa == "full") c.jsa_mode = JsaMode::Full;
  else throw ConfigError("denoiser: unknown jsa_mode '" + jsa + "'");
  c.validate();
  return c;
}

std::pair<Mat, Mat> joint_self_attention(const Mat& h_tar, const Mat& h_pt,
                                         const AttentionMask& mask,
                                         const AttentionParams& params,
                                         int heads) {
  if (h_tar.rows() != h_pt.rows() || h_tar.cols() != h_pt.cols())
    throw ValidationError("joint_self_attention: branch shapes differ");
  int L = static_cast<int>(h_tar.rows());
  if (mask.L != L) throw ValidationError("joint_self_attention: mask size mismatch");
  Mat h_cat(2 * L, h_tar.cols());
  h_cat.topRows(L) = h_tar;
  h_cat.bottomRows(L) = h_pt;
  Mat Q = (h_cat * params.Wq).rowwise() + params.bq.transpose();
  Mat K = (h_cat * params.Wk).rowwise() + params.bk.transpose();
  Mat V = (h_cat * params.Wv).rowwise() + params.bv.transpose();
  Mat out = mha_forward(Q, K, V, heads, mask_bias(mask), nullptr);
  return {out.topRows(L), out.bottomRows(L)};
}

struct Denoiser::Impl {
  DenoiserConfig cfg;
  DualLinear in_proj;
  LinearLayer temb_fc1, temb_fc2;
  std::vector<Block> blocks;
  LayerNormLayer ln_f;
  LinearLayer head;

  // forward caches
  int L_cache = 0;
  Eigen::RowVectorXd temb_sin_cache;
  Mat temb_mid_cache;  // pre-SiLU activations

  explicit Impl(const DenoiserConfig& c)
      : cfg(c),
        in_proj("in_proj", c.input_channels(), c.dim, c.separate_cloud_weights),
        temb_fc1("temb.fc1", c.temb_dim, c.dim),
        temb_fc2("temb.fc2", c.dim, c.dim),
        ln_f("ln_f", c.dim),
        head("head", c.dim, c.latent_channels()) {
    for (int i = 0; i < c.blocks; ++i)
      blocks.emplace_back("block" + std::to_string(i), c.dim, c.heads,
                          c.separate_cloud_weights, c.use_cloud_branch);
  }

  void init(Rng& rng) {
    in_proj.init(rng);
    temb_fc1.init(rng);
    temb_fc2.init(rng);
    for (auto& b : blocks) b.init(rng);
    // zero-initialized head: the untrained model predicts zero noise
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    in_proj.collect(out);
    temb_fc1.collect(out);
    temb_fc2.collect(out);
    for (auto& b : blocks) b.collect(out);
    ln_f.collect(out);
    head.collect(out);
    return out;
  }
};

Denoiser::Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  impl_ = std::make_shared<Impl>(cfg_);
}

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& init_rng) : Denoiser(cfg) {
  impl_->init(init_rng);
}

LatentBlock Denoiser::forward(const LatentBlock& noisy, int t,
                              const LatentBlock& cond_tar, const MaskImage& mask_lat,
                              const LatentBlock& cond_cloud) {
  Impl& m = *impl_;
  int cl = cfg_.latent_channels();
  int L = noisy.num_tokens();
  if (t < 0 || t >= cfg_.T) throw ConfigError("denoiser: timestep out of range");
  if (noisy.channels != cl || cond_tar.channels != cl)
    throw ValidationError("denoiser: latent channel mismatch");
  if (cond_tar.num_tokens() != L ||
      mask_lat.width * mask_lat.height != L ||
      ((cfg_.use_cloud_branch || cfg_.cloud_concat) && cond_cloud.num_tokens() != L))
    throw ValidationError("denoiser: latents are not spatially aligned");

  Vec maskcol(L);
  for (int i = 0; i < L; ++i) maskcol(i) = mask_lat.values[i];

  int n = cfg_.use_cloud_branch ? 2 * L : L;
  Mat x0(n, cfg_.input_channels());
  if (cfg_.cloud_concat) {
    x0 << noisy.tokens, maskcol, cond_tar.tokens, cond_cloud.tokens;
  } else {
    x0.topRows(L) << noisy.tokens, maskcol, cond_tar.tokens;
    if (cfg_.use_cloud_branch)
      x0.bottomRows(L) << noisy.tokens, maskcol, cond_cloud.tokens;
  }

  m.L_cache = L;
  Mat x = m.in_proj.forward(x0, L);

  m.temb_sin_cache = sinusoidal_embedding(t, cfg_.temb_dim);
  m.temb_mid_cache = m.temb_fc1.forward(m.temb_sin_cache);
  Mat temb = m.temb_fc2.forward(silu(m.temb_mid_cache));
  x.rowwise() += temb.row(0);

  Mat bias;
  if (cfg_.use_cloud_branch) {
    bias = mask_bias(build_attention_mask(L, cfg_.jsa_mode));
  } else {
    bias = Mat::Zero(L, L);
  }
  for (auto& b : m.blocks) x = b.forward(x, bias, L);

  Mat h = m.ln_f.forward(x.topRows(L));
  Mat out = m.head.forward(h);
  if (!out.allFinite())
    throw NumericError("denoiser: non-finite activations in forward pass");

  LatentBlock eps(cl, noisy.height, noisy.width);
  eps.tokens = out;
  return eps;
}

void Denoiser::backward(const Mat& grad_eps) {
  Impl& m = *impl_;
  int L = m.L_cache;
  Mat g = m.ln_f.backward(m.head.backward(grad_eps));
  int n = cfg_.use_cloud_branch ? 2 * L : L;
  Mat gx = Mat::Zero(n, cfg_.dim);
  gx.topRows(L) = g;
  for (auto it = m.blocks.rbegin(); it != m.blocks.rend(); ++it)
    gx = it->backward(gx, L);
  // timestep embedding was broadcast to every row
  Mat gtemb = gx.colwise().sum();
  Mat gmid = m.temb_fc2.backward(gtemb).cwiseProduct(silu_grad(m.temb_mid_cache));
  m.temb_fc1.backward(gmid);
  m.in_proj.backward(gx, L);
}

void Denoiser::zero_grad() {
  for (Param* p : impl_->params()) p->grad.setZero();
}

std::vector<Param*> Denoiser::params() { return impl_->params(); }

void Denoiser::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for write: " + path.string());
  out.write("GCKP", 4);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  std::string cfg_text = cfg_.to_kv().serialize();
  uint32_t cfg_len = static_cast<uint32_t>(cfg_text.size());
  out.write(reinterpret_cast<const char*>(&cfg_len), 4);
  out.write(cfg_text.data(), cfg_len);
  auto params = const_cast<Denoiser*>(this)->impl_->params();
  uint32_t count = static_cast<uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Param* p : params) {
    uint32_t nlen = static_cast<uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&nlen), 4);
    out.write(p->name.data(), nlen);
    uint32_t rank = 2;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    uint32_t dims[2] = {static_cast<uint32_t>(p->value.rows()),
                        static_cast<uint32_t>(p->value.cols())};
    out.write(reinterpret_cast<const char*>(dims), 8);
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) {
        float v = static_cast<float>(p->value(i, j));
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
  }
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Denoiser Denoiser::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GCKP", 4) != 0)
    throw IoError("bad checkpoint magic: " + path.string());
  uint32_t version = 0, cfg_len = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw IoError("unsupported checkpoint version");
  in.read(reinterpret_cast<char*>(&cfg_len), 4);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  DenoiserConfig cfg = DenoiserConfig::from_kv(io::KeyValues::parse_string(cfg_text));

  Denoiser model(cfg);
  auto params = model.impl_->params();
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  if (count != params.size())
    throw ValidationError("checkpoint parameter count mismatch");
  for (Param* p : params) {
    uint32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    if (name != p->name)
      throw ValidationError("checkpoint parameter name mismatch: expected '" +
                            p->name + "', found '" + name + "'");
    uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 4);
    if (rank != 2) throw ValidationError("checkpoint parameter rank mismatch");
    uint32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), 8);
    if (dims[0] != static_cast<uint32_t>(p->value.rows()) ||
        dims[1] != static_cast<uint32_t>(p->value.cols()))
      throw ValidationError("checkpoint parameter shape mismatch for '" + p->name + "'");
    for (uint32_t i = 0; i < dims[0]; ++i)
      for (uint32_t j = 0; j < dims[1]; ++j) {
        float v;
        in.read(reinterpret_cast<char*>(&v), 4);
        p->value(i, j) = v;
      }
    if (!in) throw IoError("truncated checkpoint: " + path.string());
  }
  return model;
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, double lr, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamOptimizer::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    Mat mhat = m_[i] / bc1;
    Mat vhat = v_[i] / bc2;
    p.value -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
}

}  // namespace cloudfill::dualnet
