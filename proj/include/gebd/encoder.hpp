#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gebd/data.hpp"
#include "gebd/nn.hpp"
#include "gebd/tensor.hpp"

namespace gebd {

enum class ModuleKind { Pointwise = 0, ConvSmall = 1, ConvMid = 2, Transformer = 3 };

const char* to_string(ModuleKind k);

// 1 / 3 / 7 for the convolutional kinds; nullopt marks the unbounded
// receptive field of the transformer kind.
std::optional<int> receptive_field(ModuleKind k);

struct StreamMeta {
  BoundaryClass cls;
  ModuleKind kind;
  int index = 0;     // position in the bank, class-major
  std::string name;  // e.g. "action.conv3"
};

struct EncoderConfig {
  int feature_dim = 0;
  int d_enc = 32;
  int tf_layers = 2;
  int tf_heads = 4;
};

struct StreamCtx {
  nn::Conv1dCtx c1, c2;
  Mat pre;  // ReLU input of the conv variants
  nn::TransformerEncoderCtx tf;
};

// One temporal module. Convolutional kinds are Conv1d(D -> d_enc, k) ->
// ReLU -> Conv1d(d_enc -> d_enc, 1), so the declared receptive field is
// exactly k. The transformer kind projects to d_enc and attends globally.
class EncoderStream {
 public:
  EncoderStream() = default;
  EncoderStream(StreamMeta meta, const EncoderConfig& cfg);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  Mat forward(const Mat& x, StreamCtx& ctx) const;
  Mat backward(const Mat& dy, const StreamCtx& ctx);

  const StreamMeta& meta() const { return meta_; }

 private:
  StreamMeta meta_;
  bool is_tf_ = false;
  nn::Conv1d c1_, c2_;
  nn::TransformerEncoder tf_;
};

struct BankCtx {
  std::vector<StreamCtx> streams;
};

// 12 parallel streams (3 classes x 4 kinds, class-major). Outputs stay
// separate; nothing here concatenates them.
class EncoderBank {
 public:
  EncoderBank() = default;
  explicit EncoderBank(const EncoderConfig& cfg);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  std::vector<Mat> encode(const Mat& features, BankCtx& ctx) const;
  // dstreams aligned with encode() output; returns d(features).
  Mat backward(const std::vector<Mat>& dstreams, const BankCtx& ctx);

  const std::vector<StreamMeta>& streams() const { return meta_; }
  const EncoderConfig& config() const { return cfg_; }

  // The canonical 12-entry order shared with checkpoints and the TSM stack.
  static std::vector<StreamMeta> layout();

 private:
  EncoderConfig cfg_;
  std::vector<EncoderStream> streams_;
  std::vector<StreamMeta> meta_;
};

}  // namespace gebd
