#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "memefuse/data.hpp"
#include "memefuse/tensor.hpp"

namespace memefuse {

// Whitespace tokenizer with per-character fallback. Ids are assigned in
// first-appearance order; id 0 is the unknown token. Characters are UTF-8
// code points so fallback stays valid on multibyte scripts.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknownId = 0;

  Vocabulary();
  static Vocabulary build(const std::vector<std::string>& texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::vector<std::size_t> tokenize(const std::string& text) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void insert(const std::string& token);
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

struct TextEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t output_dim = 64;
  std::size_t max_tokens = 256;
};

struct TextEncoderParams {
  TextEncoderConfig config;
  Tensor embedding;  // vocab_size x embed_dim
  Tensor proj_w;     // embed_dim x output_dim
  Tensor proj_b;     // {output_dim}

  static TextEncoderParams init(const TextEncoderConfig& cfg, Rng& rng);
  void register_params(ParameterSet& ps, const std::string& prefix);
};

struct ImageEncoderConfig {
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t output_dim = 64;
};

struct ImageEncoderParams {
  ImageEncoderConfig config;
  Tensor proj_w;  // (patch_size^2 * channels) x output_dim
  Tensor proj_b;  // {output_dim}

  static ImageEncoderParams init(const ImageEncoderConfig& cfg, Rng& rng);
  void register_params(ParameterSet& ps, const std::string& prefix);
};

// Row-major H x W x C pixel grid.
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return values[(i * width + j) * channels + c];
  }
};

// Embedding lookup + linear projection; truncates to config.max_tokens.
Tensor encode_text(const std::vector<std::size_t>& tokens,
                   const TextEncoderParams& p);

// Non-overlapping patches flattened row-major as (row, col, channel), then
// linearly projected; L = (H/P) * (W/P).
Tensor encode_image(const ImageGrid& grid, const ImageEncoderParams& p);

// Inline precomputed features as a frozen rank-2 tensor.
Tensor feature_tensor(const FeatureSequence& s);

// Precomputed-feature file: header "L d", then L*d decimal numbers.
Tensor load_feature_file(const std::string& path);
void save_feature_file(const std::string& path, const Tensor& features);

// Image grid file: header "H W C", then H*W*C decimal numbers.
ImageGrid load_image_grid(const std::string& path);
void save_image_grid(const std::string& path, const ImageGrid& grid);

}  // namespace memefuse
