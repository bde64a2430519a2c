#include "memefuse/encoders.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>

namespace memefuse {

namespace {

bool is_space_byte(unsigned char b) {
  return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\f' ||
         b == '\v';
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char b : text) {
    if (is_space_byte(b)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(b));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Splits a word into UTF-8 code points; malformed bytes become single-byte
// tokens rather than failing.
std::vector<std::string> split_code_points(const std::string& word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const unsigned char lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

Vocabulary::Vocabulary() { insert("<unk>"); }

void Vocabulary::insert(const std::string& token) {
  if (index_.emplace(token, tokens_.size()).second) {
    tokens_.push_back(token);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  Vocabulary v;
  for (const std::string& text : texts) {
    for (const std::string& word : split_words(text)) {
      v.insert(word);
      for (const std::string& cp : split_code_points(word)) v.insert(cp);
    }
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != "<unk>") {
    throw DataError("vocabulary must start with <unk>");
  }
  Vocabulary v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::size_t before = v.size();
    v.insert(tokens[i]);
    if (v.size() == before) {
      throw DataError("duplicate vocabulary token \"" + tokens[i] + "\"");
    }
  }
  return v;
}

std::vector<std::size_t> Vocabulary::tokenize(const std::string& text) const {
  std::vector<std::size_t> ids;
  for (const std::string& word : split_words(text)) {
    auto it = index_.find(word);
    if (it != index_.end()) {
      ids.push_back(it->second);
      continue;
    }
    for (const std::string& cp : split_code_points(word)) {
      auto cit = index_.find(cp);
      ids.push_back(cit == index_.end() ? kUnknownId : cit->second);
    }
  }
  return ids;
}

TextEncoderParams TextEncoderParams::init(const TextEncoderConfig& cfg,
                                          Rng& rng) {
  if (cfg.vocab_size == 0 || cfg.embed_dim == 0 || cfg.output_dim == 0 ||
      cfg.max_tokens == 0) {
    throw ContractError("text encoder config requires positive sizes");
  }
  TextEncoderParams p;
  p.config = cfg;
  p.embedding = Tensor::glorot(cfg.vocab_size, cfg.embed_dim, rng);
  p.proj_w = Tensor::glorot(cfg.embed_dim, cfg.output_dim, rng);
  p.proj_b = Tensor::zeros({cfg.output_dim}, true);
  return p;
}

void TextEncoderParams::register_params(ParameterSet& ps,
                                        const std::string& prefix) {
  embedding = ps.add(prefix + ".embedding", embedding);
  proj_w = ps.add(prefix + ".proj.w", proj_w);
  proj_b = ps.add(prefix + ".proj.b", proj_b);
}

ImageEncoderParams ImageEncoderParams::init(const ImageEncoderConfig& cfg,
                                            Rng& rng) {
  if (cfg.patch_size == 0 || cfg.channels == 0 || cfg.output_dim == 0) {
    throw ContractError("image encoder config requires positive sizes");
  }
  ImageEncoderParams p;
  p.config = cfg;
  const std::size_t flat = cfg.patch_size * cfg.patch_size * cfg.channels;
  p.proj_w = Tensor::glorot(flat, cfg.output_dim, rng);
  p.proj_b = Tensor::zeros({cfg.output_dim}, true);
  return p;
}

void ImageEncoderParams::register_params(ParameterSet& ps,
                                         const std::string& prefix) {
  proj_w = ps.add(prefix + ".proj.w", proj_w);
  proj_b = ps.add(prefix + ".proj.b", proj_b);
}

Tensor encode_text(const std::vector<std::size_t>& tokens,
                   const TextEncoderParams& p) {
  if (tokens.empty()) {
    throw ContractError("encode_text: need at least one token");
  }
  std::span<const std::size_t> ids(tokens);
  if (ids.size() > p.config.max_tokens) {
    ids = ids.subspan(0, p.config.max_tokens);
  }
  Tensor embedded = embedding_rows(p.embedding, ids);
  return add_rowwise(matmul(embedded, p.proj_w), p.proj_b);
}

Tensor encode_image(const ImageGrid& grid, const ImageEncoderParams& p) {
  const std::size_t ps = p.config.patch_size;
  if (grid.height == 0 || grid.width == 0 ||
      grid.channels != p.config.channels) {
    throw ContractError("encode_image: grid shape does not match config");
  }
  if (grid.values.size() != grid.height * grid.width * grid.channels) {
    throw ContractError("encode_image: grid value count mismatch");
  }
  if (grid.height % ps != 0 || grid.width % ps != 0) {
    throw ContractError(
        "encode_image: grid dimensions must be divisible by patch size");
  }
  const std::size_t rows = grid.height / ps;
  const std::size_t cols = grid.width / ps;
  const std::size_t flat = ps * ps * grid.channels;
  std::vector<double> patches;
  patches.reserve(rows * cols * flat);
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      for (std::size_t i = 0; i < ps; ++i) {
        for (std::size_t j = 0; j < ps; ++j) {
          for (std::size_t c = 0; c < grid.channels; ++c) {
            patches.push_back(grid.at(pr * ps + i, pc * ps + j, c));
          }
        }
      }
    }
  }
  Tensor patch_mat =
      Tensor::from_values({rows * cols, flat}, std::move(patches));
  return add_rowwise(matmul(patch_mat, p.proj_w), p.proj_b);
}

Tensor feature_tensor(const FeatureSequence& s) {
  if (s.len == 0 || s.dim == 0 || s.values.size() != s.len * s.dim) {
    throw DataError("feature_tensor: inconsistent feature shape");
  }
  for (double v : s.values) {
    if (!std::isfinite(v)) {
      throw DataError("feature_tensor: non-finite value");
    }
  }
  return Tensor::from_values({s.len, s.dim}, s.values);
}

namespace {

double read_number(std::istream& in, const std::string& path,
                   const char* what) {
  double v;
  if (!(in >> v)) {
    throw DataError("feature file \"" + path + "\": missing " + what);
  }
  return v;
}

}  // namespace

Tensor load_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file \"" + path + "\"");
  std::size_t len = 0, dim = 0;
  if (!(in >> len >> dim) || len == 0 || dim == 0) {
    throw DataError("feature file \"" + path + "\": bad header, want \"L d\"");
  }
  std::vector<double> values;
  values.reserve(len * dim);
  for (std::size_t i = 0; i < len * dim; ++i) {
    const double v = read_number(in, path, "values (dim mismatch?)");
    if (!std::isfinite(v)) {
      throw DataError("feature file \"" + path + "\": non-finite value");
    }
    values.push_back(v);
  }
  std::string trailing;
  if (in >> trailing) {
    throw DataError("feature file \"" + path +
                    "\": trailing content beyond declared L*d values");
  }
  return Tensor::from_values({len, dim}, std::move(values));
}

void save_feature_file(const std::string& path, const Tensor& features) {
  if (features.rank() != 2) {
    throw ContractError("save_feature_file: features must be rank 2");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature file \"" + path + "\"");
  char buf[64];
  out << features.rows() << ' ' << features.cols() << '\n';
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < features.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", features.at(i, j));
      out << buf << (j + 1 == features.cols() ? "" : " ");
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing feature file \"" + path + "\"");
}

ImageGrid load_image_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open image grid \"" + path + "\"");
  ImageGrid g;
  if (!(in >> g.height >> g.width >> g.channels) || g.height == 0 ||
      g.width == 0 || g.channels == 0) {
    throw DataError("image grid \"" + path + "\": bad header, want \"H W C\"");
  }
  const std::size_t total = g.height * g.width * g.channels;
  g.values.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double v = read_number(in, path, "pixel values");
    if (!std::isfinite(v)) {
      throw DataError("image grid \"" + path + "\": non-finite value");
    }
    g.values.push_back(v);
  }
  std::string trailing;
  if (in >> trailing) {
    throw DataError("image grid \"" + path + "\": trailing content");
  }
  return g;
}

void save_image_grid(const std::string& path, const ImageGrid& grid) {
  if (grid.values.size() != grid.height * grid.width * grid.channels ||
      grid.values.empty()) {
    throw ContractError("save_image_grid: inconsistent grid");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write image grid \"" + path + "\"");
  out << grid.height << ' ' << grid.width << ' ' << grid.channels << '\n';
  char buf[64];
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", grid.values[i]);
    out << buf << ((i + 1) % grid.channels == 0 ? '\n' : ' ');
  }
  if (!out) throw DataError("failed writing image grid \"" + path + "\"");
}

}  // namespace memefuse
