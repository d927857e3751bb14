#include "docnli/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "docnli/util.hpp"

namespace docnli {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kMaskBias = -1e30;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller, resampled beyond two sigma.
double truncated_normal(std::mt19937_64& rng) {
  for (;;) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) continue;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    if (std::abs(z) <= 2.0) return z;
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Row-wise LayerNorm; returns y and caches x-hat and 1/std per row.
void layer_norm_forward(const Eigen::MatrixXd& x, const Eigen::Map<const Eigen::MatrixXd>& gain,
                        const Eigen::Map<const Eigen::MatrixXd>& bias, Eigen::MatrixXd& normed,
                        Eigen::VectorXd& inv_std, Eigen::MatrixXd& y) {
  const int cols = static_cast<int>(x.cols());
  Eigen::VectorXd mean = x.rowwise().mean();
  Eigen::MatrixXd centered = x.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().mean();
  inv_std = (var.array() + kLayerNormEps).rsqrt();
  normed = centered.array().colwise() * inv_std.array();
  y = (normed.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  (void)cols;
}

// dL/dy -> dL/dx plus gain/bias gradients.
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& normed,
                                    const Eigen::VectorXd& inv_std,
                                    const Eigen::Map<const Eigen::MatrixXd>& gain,
                                    Eigen::Map<Eigen::MatrixXd> d_gain,
                                    Eigen::Map<Eigen::MatrixXd> d_bias) {
  d_gain.row(0) += (dy.array() * normed.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  Eigen::MatrixXd dyg = dy.array().rowwise() * gain.row(0).array();
  Eigen::VectorXd mean_dyg = dyg.rowwise().mean();
  Eigen::VectorXd mean_dyg_xhat = (dyg.array() * normed.array()).rowwise().mean();
  Eigen::MatrixXd dx = ((dyg.colwise() - mean_dyg).array() -
                        (normed.array().colwise() * mean_dyg_xhat.array()))
                           .colwise() *
                       inv_std.array();
  return dx;
}

Eigen::MatrixXd dropout_mask(int rows, int cols, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return Eigen::MatrixXd();
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      mask(i, j) = uniform01(*rng) < keep ? scale : 0.0;
    }
  }
  return mask;
}

inline void apply_dropout(Eigen::MatrixXd& x, const Eigen::MatrixXd& mask) {
  if (mask.size() > 0) x.array() *= mask.array();
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw ValidationError("encoder vocab_size must be positive");
  if (hidden_dim <= 0 || num_heads <= 0 || hidden_dim % num_heads != 0) {
    throw ValidationError("hidden_dim must be a positive multiple of num_heads");
  }
  if (num_layers < 0 || ffn_dim <= 0 || max_positions <= 0) {
    throw ValidationError("invalid encoder dimensions");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0,1)");
  if (nli_classes != 2 && nli_classes != 3) {
    throw ValidationError("nli_classes must be 2 or 3");
  }
}

ModelParams::ModelParams(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.hidden_dim;
  const int f = config_.ffn_dim;
  std::ptrdiff_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols, bool decay) {
    specs_.push_back({name, offset, rows, cols, decay});
    offset += static_cast<std::ptrdiff_t>(rows) * cols;
  };
  add("tok_emb", config_.vocab_size, d, true);
  add("pos_emb", config_.max_positions, d, true);
  add("seg_emb", 2, d, true);
  add("emb_ln_g", 1, d, false);
  add("emb_ln_b", 1, d, false);
  for (int layer = 0; layer < config_.num_layers; ++layer) {
    std::string p = "l" + std::to_string(layer) + ".";
    add(p + "attn_wq", d, d, true);
    add(p + "attn_bq", 1, d, false);
    add(p + "attn_wk", d, d, true);
    add(p + "attn_bk", 1, d, false);
    add(p + "attn_wv", d, d, true);
    add(p + "attn_bv", 1, d, false);
    add(p + "attn_wo", d, d, true);
    add(p + "attn_bo", 1, d, false);
    add(p + "ln1_g", 1, d, false);
    add(p + "ln1_b", 1, d, false);
    add(p + "ffn_w1", d, f, true);
    add(p + "ffn_b1", 1, f, false);
    add(p + "ffn_w2", f, d, true);
    add(p + "ffn_b2", 1, d, false);
    add(p + "ln2_g", 1, d, false);
    add(p + "ln2_b", 1, d, false);
  }
  add("span_w1", d, d, true);
  add("span_b1", 1, d, false);
  add("span_w2", d, 1, true);
  add("span_b2", 1, 1, false);
  add("nli_w1", d, d, true);
  add("nli_b1", 1, d, false);
  add("nli_w2", d, config_.nli_classes, true);
  add("nli_b2", 1, config_.nli_classes, false);
  // per-token start/end head used by the fixed-window QA-style baseline
  add("qa_w", d, 2, true);
  add("qa_b", 1, 2, false);
  values_ = Eigen::VectorXd::Zero(offset);
}

ModelParams ModelParams::random_init(const EncoderConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  std::mt19937_64 rng(mix64(seed));
  for (const TensorSpec& spec : params.specs_) {
    auto view = params.tensor(spec.name);
    bool is_gain = spec.name.find("ln_g") != std::string::npos ||
                   spec.name.find("ln1_g") != std::string::npos ||
                   spec.name.find("ln2_g") != std::string::npos;
    bool is_bias = !spec.weight_decay && !is_gain;
    if (is_gain) {
      view.setOnes();
    } else if (is_bias) {
      view.setZero();
    } else {
      for (int c = 0; c < spec.cols; ++c) {
        for (int r = 0; r < spec.rows; ++r) {
          view(r, c) = 0.02 * truncated_normal(rng);
        }
      }
    }
  }
  return params;
}

const TensorSpec& ModelParams::spec(const std::string& name) const {
  for (const TensorSpec& s : specs_) {
    if (s.name == name) return s;
  }
  throw ShapeMismatchError("unknown tensor: " + name);
}

Eigen::Map<Eigen::MatrixXd> ModelParams::tensor(const std::string& name) {
  const TensorSpec& s = spec(name);
  return Eigen::Map<Eigen::MatrixXd>(values_.data() + s.offset, s.rows, s.cols);
}

Eigen::Map<const Eigen::MatrixXd> ModelParams::tensor(const std::string& name) const {
  const TensorSpec& s = spec(name);
  return Eigen::Map<const Eigen::MatrixXd>(values_.data() + s.offset, s.rows, s.cols);
}

void ModelParams::zero_heads() {
  for (const TensorSpec& s : specs_) {
    if (s.name.rfind("span_", 0) == 0 || s.name.rfind("nli_", 0) == 0) {
      tensor(s.name).setZero();
    }
  }
}

void ModelParams::save(const std::string& path) const {
  nlohmann::json header = {{"format", "docnli-checkpoint"},
                           {"version", 1},
                           {"vocab_size", config_.vocab_size},
                           {"hidden_dim", config_.hidden_dim},
                           {"num_layers", config_.num_layers},
                           {"num_heads", config_.num_heads},
                           {"ffn_dim", config_.ffn_dim},
                           {"max_positions", config_.max_positions},
                           {"dropout", config_.dropout},
                           {"nli_classes", config_.nli_classes}};
  std::string head = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write checkpoint: " + path);
  std::uint64_t head_len = head.size();
  std::uint64_t count = static_cast<std::uint64_t>(values_.size());
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw IOError("short checkpoint write: " + path);
}

ModelParams ModelParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot read checkpoint: " + path);
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  if (!in || head_len > (1u << 20)) throw ParseError("corrupt checkpoint header: " + path);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "docnli-checkpoint" || header.value("version", 0) != 1) {
    throw UnsupportedVersionError("unsupported checkpoint version in " + path);
  }
  EncoderConfig config;
  config.vocab_size = header.at("vocab_size").get<int>();
  config.hidden_dim = header.at("hidden_dim").get<int>();
  config.num_layers = header.at("num_layers").get<int>();
  config.num_heads = header.at("num_heads").get<int>();
  config.ffn_dim = header.at("ffn_dim").get<int>();
  config.max_positions = header.at("max_positions").get<int>();
  config.dropout = header.at("dropout").get<double>();
  config.nli_classes = header.at("nli_classes").get<int>();
  ModelParams params(config);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != static_cast<std::uint64_t>(params.size())) {
    throw ParseError("checkpoint tensor count mismatch in " + path);
  }
  in.read(reinterpret_cast<char*>(params.values_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ParseError("truncated checkpoint: " + path);
  return params;
}

struct EncoderPass::LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> probs;  // per head, L x L
  Eigen::MatrixXd ctx;                 // pre-output-projection
  Eigen::MatrixXd attn_dropout;
  Eigen::MatrixXd res1;
  Eigen::MatrixXd ln1_normed;
  Eigen::VectorXd ln1_inv_std;
  Eigen::MatrixXd h1;
  Eigen::MatrixXd ffn_pre;
  Eigen::MatrixXd ffn_act;
  Eigen::MatrixXd ffn_dropout;
  Eigen::MatrixXd res2;
  Eigen::MatrixXd ln2_normed;
  Eigen::VectorXd ln2_inv_std;
  Eigen::MatrixXd h2;
};

EncoderPass::EncoderPass(const ModelParams& params) : params_(params) {}

EncoderPass::~EncoderPass() = default;

const Eigen::MatrixXd& EncoderPass::run(const std::vector<int>& token_ids,
                                        const std::vector<int>& segment_ids,
                                        const std::vector<int>& attention_mask,
                                        std::mt19937_64* dropout_rng) {
  const EncoderConfig& cfg = params_.config();
  const int L = static_cast<int>(token_ids.size());
  if (L == 0) throw ValidationError("empty encoder input");
  if (L > cfg.max_positions) {
    throw ValidationError("input of " + std::to_string(L) + " tokens exceeds max_positions " +
                          std::to_string(cfg.max_positions));
  }
  if (segment_ids.size() != token_ids.size() || attention_mask.size() != token_ids.size()) {
    throw ShapeMismatchError("token/segment/mask lengths differ");
  }
  training_ = dropout_rng != nullptr;
  token_ids_ = token_ids;
  segment_ids_ = segment_ids;

  const int d = cfg.hidden_dim;
  const int heads = cfg.num_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  mask_bias_.resize(L);
  for (int i = 0; i < L; ++i) {
    mask_bias_(i) = attention_mask[static_cast<std::size_t>(i)] != 0 ? 0.0 : kMaskBias;
  }

  auto tok = t("tok_emb");
  auto pos = t("pos_emb");
  auto seg = t("seg_emb");
  embedded_.resize(L, d);
  for (int i = 0; i < L; ++i) {
    int id = token_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= cfg.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
    }
    embedded_.row(i) =
        tok.row(id) + pos.row(i) + seg.row(segment_ids[static_cast<std::size_t>(i)]);
  }
  Eigen::MatrixXd h;
  layer_norm_forward(embedded_, t("emb_ln_g"), t("emb_ln_b"), emb_normed_, emb_inv_std_, h);
  emb_dropout_mask_ = dropout_mask(L, d, cfg.dropout, dropout_rng);
  apply_dropout(h, emb_dropout_mask_);
  h0_ = h;

  layers_.clear();
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    std::string p = "l" + std::to_string(layer) + ".";
    auto cache = std::make_unique<LayerCache>();
    cache->input = h;

    cache->q = (h * t(p + "attn_wq")).rowwise() + t(p + "attn_bq").row(0);
    cache->k = (h * t(p + "attn_wk")).rowwise() + t(p + "attn_bk").row(0);
    cache->v = (h * t(p + "attn_wv")).rowwise() + t(p + "attn_bv").row(0);

    cache->ctx.resize(L, d);
    cache->probs.resize(static_cast<std::size_t>(heads));
    for (int head = 0; head < heads; ++head) {
      auto qh = cache->q.middleCols(head * dh, dh);
      auto kh = cache->k.middleCols(head * dh, dh);
      auto vh = cache->v.middleCols(head * dh, dh);
      Eigen::MatrixXd scores = (qh * kh.transpose()) * inv_sqrt_dh;
      scores.rowwise() += mask_bias_.transpose();
      Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
      Eigen::MatrixXd expd = (scores.colwise() - row_max).array().exp();
      Eigen::VectorXd denom = expd.rowwise().sum();
      cache->probs[static_cast<std::size_t>(head)] =
          expd.array().colwise() / denom.array();
      cache->ctx.middleCols(head * dh, dh) =
          cache->probs[static_cast<std::size_t>(head)] * vh;
    }

    Eigen::MatrixXd attn_out = (cache->ctx * t(p + "attn_wo")).rowwise() + t(p + "attn_bo").row(0);
    cache->attn_dropout = dropout_mask(L, d, cfg.dropout, dropout_rng);
    apply_dropout(attn_out, cache->attn_dropout);
    cache->res1 = cache->input + attn_out;
    layer_norm_forward(cache->res1, t(p + "ln1_g"), t(p + "ln1_b"), cache->ln1_normed,
                       cache->ln1_inv_std, cache->h1);

    cache->ffn_pre = (cache->h1 * t(p + "ffn_w1")).rowwise() + t(p + "ffn_b1").row(0);
    cache->ffn_act = cache->ffn_pre.unaryExpr([](double x) { return gelu(x); });
    Eigen::MatrixXd ffn_out = (cache->ffn_act * t(p + "ffn_w2")).rowwise() + t(p + "ffn_b2").row(0);
    cache->ffn_dropout = dropout_mask(L, d, cfg.dropout, dropout_rng);
    apply_dropout(ffn_out, cache->ffn_dropout);
    cache->res2 = cache->h1 + ffn_out;
    layer_norm_forward(cache->res2, t(p + "ln2_g"), t(p + "ln2_b"), cache->ln2_normed,
                       cache->ln2_inv_std, cache->h2);

    if (!cache->h2.allFinite()) {
      throw NonFiniteError("non-finite activation in encoder layer " + std::to_string(layer));
    }
    h = cache->h2;
    layers_.push_back(std::move(cache));
  }
  final_ = h;
  return final_;
}

void EncoderPass::backward(const Eigen::MatrixXd& d_hidden, Eigen::VectorXd& grad) {
  const EncoderConfig& cfg = params_.config();
  if (grad.size() != params_.size()) {
    throw ShapeMismatchError("gradient buffer size mismatch");
  }
  const int d = cfg.hidden_dim;
  const int heads = cfg.num_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  auto g = [&](const std::string& name) {
    for (const TensorSpec& s : params_.specs()) {
      if (s.name == name) {
        return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
      }
    }
    throw ShapeMismatchError("unknown tensor: " + name);
  };

  Eigen::MatrixXd dh_out = d_hidden;
  for (int layer = cfg.num_layers - 1; layer >= 0; --layer) {
    std::string p = "l" + std::to_string(layer) + ".";
    LayerCache& c = *layers_[static_cast<std::size_t>(layer)];

    Eigen::MatrixXd dres2 = layer_norm_backward(dh_out, c.ln2_normed, c.ln2_inv_std,
                                                t(p + "ln2_g"), g(p + "ln2_g"), g(p + "ln2_b"));
    Eigen::MatrixXd dffn_out = dres2;
    apply_dropout(dffn_out, c.ffn_dropout);
    Eigen::MatrixXd dh1 = dres2;  // residual branch

    g(p + "ffn_w2") += c.ffn_act.transpose() * dffn_out;
    g(p + "ffn_b2").row(0) += dffn_out.colwise().sum();
    Eigen::MatrixXd dact = dffn_out * t(p + "ffn_w2").transpose();
    Eigen::MatrixXd dpre =
        dact.array() * c.ffn_pre.unaryExpr([](double x) { return gelu_grad(x); }).array();
    g(p + "ffn_w1") += c.h1.transpose() * dpre;
    g(p + "ffn_b1").row(0) += dpre.colwise().sum();
    dh1 += dpre * t(p + "ffn_w1").transpose();

    Eigen::MatrixXd dres1 = layer_norm_backward(dh1, c.ln1_normed, c.ln1_inv_std,
                                                t(p + "ln1_g"), g(p + "ln1_g"), g(p + "ln1_b"));
    Eigen::MatrixXd dattn_out = dres1;
    apply_dropout(dattn_out, c.attn_dropout);
    Eigen::MatrixXd dinput = dres1;  // residual branch

    g(p + "attn_wo") += c.ctx.transpose() * dattn_out;
    g(p + "attn_bo").row(0) += dattn_out.colwise().sum();
    Eigen::MatrixXd dctx = dattn_out * t(p + "attn_wo").transpose();

    Eigen::MatrixXd dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (int head = 0; head < heads; ++head) {
      const Eigen::MatrixXd& probs = c.probs[static_cast<std::size_t>(head)];
      auto kh = c.k.middleCols(head * dh, dh);
      auto qh = c.q.middleCols(head * dh, dh);
      auto vh = c.v.middleCols(head * dh, dh);
      auto dctx_h = dctx.middleCols(head * dh, dh);

      Eigen::MatrixXd dprobs = dctx_h * vh.transpose();
      dv.middleCols(head * dh, dh) = probs.transpose() * dctx_h;
      Eigen::VectorXd row_dot = (dprobs.array() * probs.array()).rowwise().sum();
      Eigen::MatrixXd dscores =
          probs.array() * (dprobs.colwise() - row_dot).array() * inv_sqrt_dh;
      dq.middleCols(head * dh, dh) = dscores * kh;
      dk.middleCols(head * dh, dh) = dscores.transpose() * qh;
    }
    g(p + "attn_wq") += c.input.transpose() * dq;
    g(p + "attn_bq").row(0) += dq.colwise().sum();
    g(p + "attn_wk") += c.input.transpose() * dk;
    g(p + "attn_bk").row(0) += dk.colwise().sum();
    g(p + "attn_wv") += c.input.transpose() * dv;
    g(p + "attn_bv").row(0) += dv.colwise().sum();
    dinput += dq * t(p + "attn_wq").transpose();
    dinput += dk * t(p + "attn_wk").transpose();
    dinput += dv * t(p + "attn_wv").transpose();

    dh_out = std::move(dinput);
  }

  apply_dropout(dh_out, emb_dropout_mask_);
  Eigen::MatrixXd dembedded = layer_norm_backward(dh_out, emb_normed_, emb_inv_std_,
                                                  t("emb_ln_g"), g("emb_ln_g"), g("emb_ln_b"));
  auto dtok = g("tok_emb");
  auto dpos = g("pos_emb");
  auto dseg = g("seg_emb");
  for (int i = 0; i < dembedded.rows(); ++i) {
    dtok.row(token_ids_[static_cast<std::size_t>(i)]) += dembedded.row(i);
    dpos.row(i) += dembedded.row(i);
    dseg.row(segment_ids_[static_cast<std::size_t>(i)]) += dembedded.row(i);
  }
}

AdamW::AdamW(std::ptrdiff_t size, const AdamWConfig& config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void AdamW::step(ModelParams& params, Eigen::VectorXd& grad) {
  if (grad.size() != m_.size()) throw ShapeMismatchError("optimizer size mismatch");
  double norm = grad.norm();
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  if (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) {
    grad *= config_.max_grad_norm / norm;
  }
  ++step_;
  double lr = config_.learning_rate;
  if (config_.warmup_steps > 0 && step_ <= config_.warmup_steps) {
    lr *= static_cast<double>(step_) / static_cast<double>(config_.warmup_steps);
  }
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_.array() + (1.0 - config_.beta2) * grad.array().square();
  double bc1 = 1.0 - std::pow(config_.beta1, step_);
  double bc2 = 1.0 - std::pow(config_.beta2, step_);
  Eigen::ArrayXd update =
      (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + config_.epsilon);
  params.flat().array() -= lr * update;
  if (config_.weight_decay > 0.0) {
    for (const TensorSpec& spec : params.specs()) {
      if (!spec.weight_decay) continue;
      params.flat().segment(spec.offset, spec.size()) *= 1.0 - lr * config_.weight_decay;
    }
  }
}

}  // namespace docnli
