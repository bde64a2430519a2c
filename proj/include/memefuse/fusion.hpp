#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "memefuse/errors.hpp"
#include "memefuse/rng.hpp"
#include "memefuse/tensor.hpp"

namespace memefuse {

enum class Strategy {
  Early,
  Late,
  ClipStyle,
  CrossT2I,
  CrossI2T,
  Mcfm,
  UnimodalText,
  UnimodalImage,
};

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& token);
// All accepted tokens in canonical order, fusion strategies first.
const std::vector<std::string>& strategy_tokens();

// How late fusion combines the two unimodal classifier outputs. The mean of
// probability vectors is the default; the alternatives exist for ablations.
enum class LateCombine { MeanProb, MeanLogit, MaxProb };

struct ModelConfig {
  Strategy strategy = Strategy::Mcfm;
  std::size_t text_input_dim = 64;
  std::size_t image_input_dim = 64;
  std::size_t model_dim = 64;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 64;
  double dropout_rate = 0.5;
  std::size_t co_attention_depth = 1;
  bool freeze_projections = false;
  LateCombine late_combine = LateCombine::MeanProb;

  void validate() const;
};

// One multi-head attention block: per-head projections, output projection,
// and the gain/shift of the post-residual layer norm.
struct AttentionParams {
  std::vector<Tensor> wq;  // per head, (d, d/h)
  std::vector<Tensor> wk;
  std::vector<Tensor> wv;
  Tensor wo;        // (d, d)
  Tensor ln_gamma;  // (d)
  Tensor ln_beta;   // (d)
};

struct AttentionTrace {
  std::size_t query_len = 0;
  std::size_t kv_len = 0;
  // One row-major (query_len x kv_len) weight matrix per head.
  std::vector<std::vector<double>> head_weights;
};

struct ForwardTrace {
  std::vector<AttentionTrace> attentions;  // in forward-call order
  std::vector<double> clip_norms;          // clip_style: norms of u, v
};

// softmax(Q Kᵀ / sqrt(d/h)) V per head, heads concatenated, output-projected,
// plus residual connection and layer normalization over the query sequence.
Tensor multi_head_attention(const Tensor& q_seq, const Tensor& kv_seq,
                            const AttentionParams& p,
                            AttentionTrace* trace = nullptr);

// A classifier over a (text sequence, image sequence) pair. Raw modality
// features are first projected to the shared model dim; what happens next
// depends on the strategy:
//   early          concat mean-pooled projections -> MLP head
//   late           per-modality linear classifiers, probabilities combined
//   clip_style     pooled projections to a joint space, L2-normalized,
//                  fused as [u; v; u*v] -> MLP head
//   cross_t2i/i2t  one-direction attention, pooled attended features
//                  concatenated with the pooled other modality -> MLP head
//   mcfm           bidirectional co-attention; pooled attended features from
//                  both directions concatenated with both pooled raw
//                  projections -> MLP head
//   unimodal_*     single-modality pooled projection -> linear classifier
// The MLP head is two GELU layers followed by dropout and a linear map to
// the 3 class logits.
class FusionModel {
 public:
  FusionModel(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Every tensor owned by the model in registration order, frozen ones
  // included; this is the checkpoint inventory.
  const std::vector<std::pair<std::string, Tensor>>& named_tensors() const {
    return named_;
  }
  const Tensor& tensor_named(const std::string& name) const;

  // Logits of shape {3}. Late fusion returns log-probabilities, which play
  // the role of logits for every downstream consumer. Training mode with a
  // positive dropout rate requires dropout_rng.
  Tensor forward(const Tensor& text_seq, const Tensor& image_seq,
                 bool training = false, Rng* dropout_rng = nullptr,
                 ForwardTrace* trace = nullptr) const;

  // Evaluation-mode class probabilities.
  std::vector<double> predict_probs(const Tensor& text_seq,
                                    const Tensor& image_seq) const;

 private:
  Tensor add_tensor(const std::string& name, Tensor t, bool trainable);
  AttentionParams init_attention(const std::string& prefix, Rng& rng);
  void init_mlp_head(std::size_t fused_dim, Rng& rng);

  Tensor project_text(const Tensor& text_seq) const;
  Tensor project_image(const Tensor& image_seq) const;
  Tensor mlp_head(const Tensor& fused, bool training, Rng* dropout_rng) const;
  Tensor late_probs(const Tensor& text_seq, const Tensor& image_seq) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> named_;
  std::map<std::string, std::size_t> name_index_;
  ParameterSet params_;

  Tensor proj_text_w_, proj_text_b_;
  Tensor proj_image_w_, proj_image_b_;
  std::vector<std::pair<AttentionParams, AttentionParams>> co_layers_;
  AttentionParams cross_;
  Tensor clip_text_w_, clip_image_w_;
  Tensor late_text_w_, late_text_b_, late_image_w_, late_image_b_;
  Tensor mlp_fc1_w_, mlp_fc1_b_, mlp_fc2_w_, mlp_fc2_b_;
  Tensor head_w_, head_b_;
};

}  // namespace memefuse
