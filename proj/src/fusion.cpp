#include "memefuse/fusion.hpp"

#include <cmath>

namespace memefuse {

namespace {

constexpr std::size_t kClasses = 3;

const std::vector<std::string> kStrategyTokens{
    "early",        "late",          "clip_style",
    "cross_t2i",    "cross_i2t",     "mcfm",
    "unimodal_text", "unimodal_image"};

Tensor frozen_copy(const Tensor& t) {
  return Tensor::from_values(
      t.shape(), std::vector<double>(t.values().begin(), t.values().end()),
      false);
}

}  // namespace

std::string strategy_name(Strategy s) {
  return kStrategyTokens[static_cast<std::size_t>(s)];
}

Strategy parse_strategy(const std::string& token) {
  for (std::size_t i = 0; i < kStrategyTokens.size(); ++i) {
    if (kStrategyTokens[i] == token) return static_cast<Strategy>(i);
  }
  std::string allowed;
  for (const std::string& t : kStrategyTokens) {
    if (!allowed.empty()) allowed += ", ";
    allowed += t;
  }
  throw ContractError("unknown strategy '" + token + "': expected one of " +
                      allowed);
}

const std::vector<std::string>& strategy_tokens() { return kStrategyTokens; }

void ModelConfig::validate() const {
  if (text_input_dim == 0 || image_input_dim == 0) {
    throw ContractError("ModelConfig: input dims must be positive");
  }
  if (model_dim == 0 || heads == 0) {
    throw ContractError("ModelConfig: model_dim and heads must be positive");
  }
  if (model_dim % heads != 0) {
    throw ContractError("ModelConfig: model_dim must be divisible by heads");
  }
  if (mlp_hidden == 0) {
    throw ContractError("ModelConfig: mlp_hidden must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("ModelConfig: dropout_rate must be in [0,1)");
  }
  if (co_attention_depth == 0) {
    throw ContractError("ModelConfig: co_attention_depth must be at least 1");
  }
}

Tensor multi_head_attention(const Tensor& q_seq, const Tensor& kv_seq,
                            const AttentionParams& p, AttentionTrace* trace) {
  if (!q_seq.defined() || !kv_seq.defined() || q_seq.rank() != 2 ||
      kv_seq.rank() != 2) {
    throw ContractError("multi_head_attention: sequences must be rank-2");
  }
  const std::size_t d = q_seq.cols();
  if (kv_seq.cols() != d) {
    throw ContractError("multi_head_attention: query and key/value dims differ");
  }
  const std::size_t h = p.wq.size();
  if (h == 0 || p.wk.size() != h || p.wv.size() != h) {
    throw ContractError("multi_head_attention: malformed head parameters");
  }
  if (d % h != 0) {
    throw ContractError(
        "multi_head_attention: model dim must be divisible by head count");
  }
  const std::size_t dh = d / h;
  for (std::size_t k = 0; k < h; ++k) {
    if (p.wq[k].rows() != d || p.wq[k].cols() != dh || p.wk[k].rows() != d ||
        p.wk[k].cols() != dh || p.wv[k].rows() != d || p.wv[k].cols() != dh) {
      throw ContractError("multi_head_attention: head projection shape mismatch");
    }
  }
  if (p.wo.rows() != d || p.wo.cols() != d) {
    throw ContractError("multi_head_attention: output projection must be d x d");
  }

  if (trace) {
    trace->query_len = q_seq.rows();
    trace->kv_len = kv_seq.rows();
    trace->head_weights.clear();
  }

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t k = 0; k < h; ++k) {
    Tensor q = matmul(q_seq, p.wq[k]);
    Tensor key = matmul(kv_seq, p.wk[k]);
    Tensor v = matmul(kv_seq, p.wv[k]);
    Tensor weights = softmax(scale(matmul(q, transpose(key)), inv_sqrt_dh), 1);
    if (trace) {
      auto span = weights.values();
      trace->head_weights.emplace_back(span.begin(), span.end());
    }
    heads.push_back(matmul(weights, v));
  }
  Tensor merged = h == 1 ? heads.front() : concat(heads, 1);
  Tensor projected = matmul(merged, p.wo);
  return layer_norm(add(q_seq, projected), p.ln_gamma, p.ln_beta);
}

FusionModel::FusionModel(ModelConfig config, Rng& rng)
    : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  const bool train_proj = !config_.freeze_projections;

  auto init_projection = [&](const std::string& prefix, std::size_t in_dim,
                             Tensor& w, Tensor& b) {
    Tensor weight = Tensor::glorot(in_dim, d, rng);
    if (!train_proj) weight = frozen_copy(weight);
    w = add_tensor(prefix + ".w", weight, train_proj);
    b = add_tensor(prefix + ".b", Tensor::zeros({d}, train_proj), train_proj);
  };

  if (config_.strategy != Strategy::UnimodalImage) {
    init_projection("proj.text", config_.text_input_dim, proj_text_w_,
                    proj_text_b_);
  }
  if (config_.strategy != Strategy::UnimodalText) {
    init_projection("proj.image", config_.image_input_dim, proj_image_w_,
                    proj_image_b_);
  }

  switch (config_.strategy) {
    case Strategy::Early:
      init_mlp_head(2 * d, rng);
      break;
    case Strategy::Late:
      late_text_w_ = add_tensor("late.text.w", Tensor::glorot(d, kClasses, rng), true);
      late_text_b_ = add_tensor("late.text.b", Tensor::zeros({kClasses}, true), true);
      late_image_w_ = add_tensor("late.image.w", Tensor::glorot(d, kClasses, rng), true);
      late_image_b_ = add_tensor("late.image.b", Tensor::zeros({kClasses}, true), true);
      break;
    case Strategy::ClipStyle:
      clip_text_w_ = add_tensor("clip.text.w", Tensor::glorot(d, d, rng), true);
      clip_image_w_ = add_tensor("clip.image.w", Tensor::glorot(d, d, rng), true);
      init_mlp_head(3 * d, rng);
      break;
    case Strategy::CrossT2I:
    case Strategy::CrossI2T:
      cross_ = init_attention("cross", rng);
      init_mlp_head(2 * d, rng);
      break;
    case Strategy::Mcfm:
      for (std::size_t l = 0; l < config_.co_attention_depth; ++l) {
        const std::string prefix = "co" + std::to_string(l);
        AttentionParams t2i = init_attention(prefix + ".t2i", rng);
        AttentionParams i2t = init_attention(prefix + ".i2t", rng);
        co_layers_.emplace_back(std::move(t2i), std::move(i2t));
      }
      init_mlp_head(4 * d, rng);
      break;
    case Strategy::UnimodalText:
    case Strategy::UnimodalImage:
      head_w_ = add_tensor("head.w", Tensor::glorot(d, kClasses, rng), true);
      head_b_ = add_tensor("head.b", Tensor::zeros({kClasses}, true), true);
      break;
  }
}

Tensor FusionModel::add_tensor(const std::string& name, Tensor t,
                               bool trainable) {
  if (name_index_.count(name) != 0) {
    throw ContractError("FusionModel: duplicate tensor name " + name);
  }
  name_index_[name] = named_.size();
  named_.emplace_back(name, t);
  if (trainable) params_.add(name, t);
  return t;
}

AttentionParams FusionModel::init_attention(const std::string& prefix,
                                            Rng& rng) {
  const std::size_t d = config_.model_dim;
  const std::size_t dh = d / config_.heads;
  AttentionParams p;
  for (std::size_t k = 0; k < config_.heads; ++k) {
    const std::string head = prefix + ".h" + std::to_string(k);
    p.wq.push_back(add_tensor(head + ".wq", Tensor::glorot(d, dh, rng), true));
    p.wk.push_back(add_tensor(head + ".wk", Tensor::glorot(d, dh, rng), true));
    p.wv.push_back(add_tensor(head + ".wv", Tensor::glorot(d, dh, rng), true));
  }
  p.wo = add_tensor(prefix + ".wo", Tensor::glorot(d, d, rng), true);
  p.ln_gamma = add_tensor(prefix + ".ln.gamma", Tensor::full({d}, 1.0, true), true);
  p.ln_beta = add_tensor(prefix + ".ln.beta", Tensor::zeros({d}, true), true);
  return p;
}

void FusionModel::init_mlp_head(std::size_t fused_dim, Rng& rng) {
  const std::size_t hidden = config_.mlp_hidden;
  mlp_fc1_w_ = add_tensor("mlp.fc1.w", Tensor::glorot(fused_dim, hidden, rng), true);
  mlp_fc1_b_ = add_tensor("mlp.fc1.b", Tensor::zeros({hidden}, true), true);
  mlp_fc2_w_ = add_tensor("mlp.fc2.w", Tensor::glorot(hidden, hidden, rng), true);
  mlp_fc2_b_ = add_tensor("mlp.fc2.b", Tensor::zeros({hidden}, true), true);
  head_w_ = add_tensor("head.w", Tensor::glorot(hidden, kClasses, rng), true);
  head_b_ = add_tensor("head.b", Tensor::zeros({kClasses}, true), true);
}

const Tensor& FusionModel::tensor_named(const std::string& name) const {
  auto it = name_index_.find(name);
  if (it == name_index_.end()) {
    throw ContractError("FusionModel: no tensor named " + name);
  }
  return named_[it->second].second;
}

Tensor FusionModel::project_text(const Tensor& text_seq) const {
  return add_rowwise(matmul(text_seq, proj_text_w_), proj_text_b_);
}

Tensor FusionModel::project_image(const Tensor& image_seq) const {
  return add_rowwise(matmul(image_seq, proj_image_w_), proj_image_b_);
}

Tensor FusionModel::mlp_head(const Tensor& fused, bool training,
                             Rng* dropout_rng) const {
  Tensor h1 = gelu(add_rowwise(matmul(fused, mlp_fc1_w_), mlp_fc1_b_));
  Tensor h2 = gelu(add_rowwise(matmul(h1, mlp_fc2_w_), mlp_fc2_b_));
  Tensor pre_head = h2;
  if (training && config_.dropout_rate > 0.0) {
    pre_head = dropout(h2, config_.dropout_rate, true, *dropout_rng);
  }
  Tensor logits = add_rowwise(matmul(pre_head, head_w_), head_b_);
  return reshape(logits, {kClasses});
}

Tensor FusionModel::late_probs(const Tensor& text_seq,
                               const Tensor& image_seq) const {
  Tensor text_logits = add_rowwise(
      matmul(mean_rows(project_text(text_seq)), late_text_w_), late_text_b_);
  Tensor image_logits = add_rowwise(
      matmul(mean_rows(project_image(image_seq)), late_image_w_), late_image_b_);
  switch (config_.late_combine) {
    case LateCombine::MeanProb: {
      Tensor mean = scale(
          add(softmax(text_logits, 1), softmax(image_logits, 1)), 0.5);
      return reshape(mean, {kClasses});
    }
    case LateCombine::MeanLogit: {
      Tensor mean_logits = scale(add(text_logits, image_logits), 0.5);
      return reshape(softmax(mean_logits, 1), {kClasses});
    }
    case LateCombine::MaxProb: {
      Tensor pt = softmax(text_logits, 1);
      Tensor pv = softmax(image_logits, 1);
      // Elementwise max via max(a,b) = a + relu(b-a), renormalized through
      // softmax(log m), which divides by the sum exactly.
      Tensor m = add(pt, relu(sub(pv, pt)));
      return reshape(softmax(log(m), 1), {kClasses});
    }
  }
  throw ContractError("FusionModel: unknown late_combine mode");
}

Tensor FusionModel::forward(const Tensor& text_seq, const Tensor& image_seq,
                            bool training, Rng* dropout_rng,
                            ForwardTrace* trace) const {
  const bool needs_text = config_.strategy != Strategy::UnimodalImage;
  const bool needs_image = config_.strategy != Strategy::UnimodalText;
  if (needs_text) {
    if (!text_seq.defined() || text_seq.rank() != 2 ||
        text_seq.cols() != config_.text_input_dim) {
      throw ContractError("FusionModel::forward: text sequence dim mismatch");
    }
  }
  if (needs_image) {
    if (!image_seq.defined() || image_seq.rank() != 2 ||
        image_seq.cols() != config_.image_input_dim) {
      throw ContractError("FusionModel::forward: image sequence dim mismatch");
    }
  }
  const bool has_mlp = config_.strategy == Strategy::Early ||
                       config_.strategy == Strategy::ClipStyle ||
                       config_.strategy == Strategy::CrossT2I ||
                       config_.strategy == Strategy::CrossI2T ||
                       config_.strategy == Strategy::Mcfm;
  if (training && has_mlp && config_.dropout_rate > 0.0 &&
      dropout_rng == nullptr) {
    throw ContractError(
        "FusionModel::forward: training with dropout requires an rng");
  }

  switch (config_.strategy) {
    case Strategy::Early: {
      Tensor fused = concat({mean_rows(project_text(text_seq)),
                             mean_rows(project_image(image_seq))},
                            1);
      return mlp_head(fused, training, dropout_rng);
    }
    case Strategy::Late:
      return log(late_probs(text_seq, image_seq));
    case Strategy::ClipStyle: {
      const std::size_t d = config_.model_dim;
      Tensor u = l2_normalize(reshape(
          matmul(mean_rows(project_text(text_seq)), clip_text_w_), {d}));
      Tensor v = l2_normalize(reshape(
          matmul(mean_rows(project_image(image_seq)), clip_image_w_), {d}));
      if (trace) {
        auto norm_of = [](const Tensor& t) {
          double s = 0.0;
          for (double x : t.values()) s += x * x;
          return std::sqrt(s);
        };
        trace->clip_norms = {norm_of(u), norm_of(v)};
      }
      Tensor fused = reshape(concat({u, v, mul(u, v)}, 0), {1, 3 * d});
      return mlp_head(fused, training, dropout_rng);
    }
    case Strategy::CrossT2I:
    case Strategy::CrossI2T: {
      Tensor t0 = project_text(text_seq);
      Tensor v0 = project_image(image_seq);
      const bool t2i = config_.strategy == Strategy::CrossT2I;
      const Tensor& q_seq = t2i ? t0 : v0;
      const Tensor& kv_seq = t2i ? v0 : t0;
      const Tensor& other = t2i ? v0 : t0;
      AttentionTrace local;
      Tensor attended = multi_head_attention(q_seq, kv_seq, cross_,
                                             trace ? &local : nullptr);
      if (trace) trace->attentions.push_back(std::move(local));
      Tensor fused = concat({mean_rows(attended), mean_rows(other)}, 1);
      return mlp_head(fused, training, dropout_rng);
    }
    case Strategy::Mcfm: {
      Tensor t0 = project_text(text_seq);
      Tensor v0 = project_image(image_seq);
      Tensor t = t0;
      Tensor v = v0;
      for (const auto& [t2i, i2t] : co_layers_) {
        AttentionTrace trace_t2i, trace_i2t;
        Tensor t_next =
            multi_head_attention(t, v, t2i, trace ? &trace_t2i : nullptr);
        Tensor v_next =
            multi_head_attention(v, t, i2t, trace ? &trace_i2t : nullptr);
        if (trace) {
          trace->attentions.push_back(std::move(trace_t2i));
          trace->attentions.push_back(std::move(trace_i2t));
        }
        t = t_next;
        v = v_next;
      }
      Tensor fused = concat(
          {mean_rows(t), mean_rows(v), mean_rows(t0), mean_rows(v0)}, 1);
      return mlp_head(fused, training, dropout_rng);
    }
    case Strategy::UnimodalText: {
      Tensor pooled = mean_rows(project_text(text_seq));
      return reshape(add_rowwise(matmul(pooled, head_w_), head_b_), {kClasses});
    }
    case Strategy::UnimodalImage: {
      Tensor pooled = mean_rows(project_image(image_seq));
      return reshape(add_rowwise(matmul(pooled, head_w_), head_b_), {kClasses});
    }
  }
  throw ContractError("FusionModel: unknown strategy");
}

std::vector<double> FusionModel::predict_probs(const Tensor& text_seq,
                                               const Tensor& image_seq) const {
  Tensor probs;
  if (config_.strategy == Strategy::Late) {
    probs = late_probs(text_seq, image_seq);
  } else {
    Tensor logits = forward(text_seq, image_seq, false, nullptr, nullptr);
    probs = reshape(softmax(reshape(logits, {1, kClasses}), 1), {kClasses});
  }
  return std::vector<double>(probs.values().begin(), probs.values().end());
}

}  // namespace memefuse
