#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwgan/errors.hpp"
#include "rwgan/rng.hpp"
#include "rwgan/tensor.hpp"

namespace rwgan::nets {

// Declarative layer chain executed by NetworkT::forward. conv / conv_transpose
// read params "<name>.w" and "<name>.b"; instance_norm reads "<name>.gamma"
// and "<name>.beta". concat_skip concatenates the saved output of an earlier
// layer (by index) onto the current activation. save_skip marks a layer whose
// output later concat_skip layers reference.
struct LayerSpec {
  enum class Kind { conv, conv_transpose, instance_norm, activation, concat_skip };

  Kind kind = Kind::conv;
  std::string name;    // parameter prefix for parameterized layers
  int64_t in_ch = 0;   // conv / conv_transpose / instance_norm
  int64_t out_ch = 0;  // conv / conv_transpose
  int64_t kernel = 0;
  int64_t stride = 1;
  int64_t pad = 0;
  Activation act = Activation::relu; // activation layers
  int64_t skip_index = -1;           // concat_skip: index of the saved layer
  bool save_skip = false;
};

inline std::string kind_str(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::conv: return "conv";
    case LayerSpec::Kind::conv_transpose: return "conv_transpose";
    case LayerSpec::Kind::instance_norm: return "instance_norm";
    case LayerSpec::Kind::activation: return "activation";
    case LayerSpec::Kind::concat_skip: return "concat_skip";
  }
  return "?";
}

inline LayerSpec::Kind kind_from_str(const std::string& s) {
  if (s == "conv") return LayerSpec::Kind::conv;
  if (s == "conv_transpose") return LayerSpec::Kind::conv_transpose;
  if (s == "instance_norm") return LayerSpec::Kind::instance_norm;
  if (s == "activation") return LayerSpec::Kind::activation;
  if (s == "concat_skip") return LayerSpec::Kind::concat_skip;
  throw FormatError("layer spec: unknown kind '" + s + "'");
}

inline std::string act_str(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu_0.2";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation act_from_str(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu_0.2") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw FormatError("layer spec: unknown activation '" + s + "'");
}

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  return {{"kind", kind_str(l.kind)},   {"name", l.name},
          {"in_ch", l.in_ch},           {"out_ch", l.out_ch},
          {"kernel", l.kernel},         {"stride", l.stride},
          {"pad", l.pad},               {"act", act_str(l.act)},
          {"skip_index", l.skip_index}, {"save_skip", l.save_skip}};
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.kind = kind_from_str(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  l.in_ch = j.at("in_ch").get<int64_t>();
  l.out_ch = j.at("out_ch").get<int64_t>();
  l.kernel = j.at("kernel").get<int64_t>();
  l.stride = j.at("stride").get<int64_t>();
  l.pad = j.at("pad").get<int64_t>();
  l.act = act_from_str(j.at("act").get<std::string>());
  l.skip_index = j.at("skip_index").get<int64_t>();
  l.save_skip = j.at("save_skip").get<bool>();
  return l;
}

enum class NetRole { generator, discriminator };

struct NetMeta {
  NetRole role = NetRole::generator;
  int64_t in_channels = 3;
  int64_t out_channels = 3;
  int64_t image_size = 256;
  int64_t base_filters = 64;
};

template <class S>
struct NetworkT {
  std::vector<LayerSpec> layers;
  std::map<std::string, TensorT<S>> params; // ordered by name
  NetMeta meta;

  TensorT<S>& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end())
      throw DataError("network: missing parameter '" + name + "'");
    return it->second;
  }

  const TensorT<S>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
      throw DataError("network: missing parameter '" + name + "'");
    return it->second;
  }

  std::vector<TensorT<S>> param_list() {
    std::vector<TensorT<S>> out;
    out.reserve(params.size());
    for (auto& [k, v] : params) out.push_back(v);
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& [k, v] : params) n += v.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : params) v.zero_grad();
  }

  TensorT<S> forward(const TensorT<S>& input) const {
    std::vector<TensorT<S>> saved(layers.size());
    TensorT<S> x = input;
    for (size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      switch (l.kind) {
        case LayerSpec::Kind::conv:
          x = conv2d(x, param(l.name + ".w"), param(l.name + ".b"), l.stride,
                     l.pad);
          break;
        case LayerSpec::Kind::conv_transpose:
          x = conv_transpose2d(x, param(l.name + ".w"), param(l.name + ".b"),
                               l.stride, l.pad);
          break;
        case LayerSpec::Kind::instance_norm:
          x = instance_norm(x, param(l.name + ".gamma"), param(l.name + ".beta"));
          break;
        case LayerSpec::Kind::activation:
          x = activation(x, l.act);
          break;
        case LayerSpec::Kind::concat_skip: {
          if (l.skip_index < 0 || size_t(l.skip_index) >= i ||
              !saved[size_t(l.skip_index)].defined())
            throw DataError("network: concat_skip references unsaved layer " +
                            std::to_string(l.skip_index));
          x = concat_channels(x, saved[size_t(l.skip_index)]);
          break;
        }
      }
      if (l.save_skip) saved[i] = x;
    }
    return x;
  }
};

using Network = NetworkT<float>;

namespace detail {

template <class S>
void init_conv(NetworkT<S>& net, const std::string& name, int64_t out_or_in,
               int64_t in_or_out, int64_t k, Rng& rng, bool transpose) {
  // conv: (Cout,Cin,K,K); conv_transpose: (Cin,Cout,K,K)
  Shape wshape{out_or_in, in_or_out, k, k};
  auto w = TensorT<S>::zeros(wshape, true);
  for (auto& v : w.values()) v = S(rng.next_normal(0.0, 0.02));
  const int64_t cout = transpose ? wshape[1] : wshape[0];
  net.params.emplace(name + ".w", std::move(w));
  net.params.emplace(name + ".b", TensorT<S>::zeros({cout}, true));
}

template <class S>
void init_norm(NetworkT<S>& net, const std::string& name, int64_t ch) {
  net.params.emplace(name + ".gamma", TensorT<S>::filled({ch}, S(1), true));
  net.params.emplace(name + ".beta", TensorT<S>::zeros({ch}, true));
}

inline bool power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

} // namespace detail

// U-Net encoder/decoder generator. log2(image_size)-2 encoder stages of
// K=4/s=2/p=1 convolutions (leaky ReLU 0.2, instance norm except stage 1,
// channel doubling capped at 8*base), mirrored decoder with skip
// concatenations, final tanh. Conv weights ~ N(0, 0.02), biases zero,
// gamma 1 / beta 0.
template <class S>
NetworkT<S> build_generator_t(int64_t image_size, int64_t base_filters,
                              int64_t in_ch = 3, int64_t out_ch = 3,
                              uint64_t init_seed = 1) {
  if (!detail::power_of_two(image_size) || image_size < 64 || image_size > 256)
    throw ConfigError("generator: image_size must be a power of two in [64, 256]");
  if (base_filters < 1) throw ConfigError("generator: base_filters must be >= 1");
  const int depth = int(std::lround(std::log2(double(image_size)))) - 2;
  const int64_t cap = 8 * base_filters;

  NetworkT<S> net;
  net.meta = {NetRole::generator, in_ch, out_ch, image_size, base_filters};
  Rng rng(init_seed);

  std::vector<int64_t> enc_ch(size_t(depth), 0);
  for (int i = 0; i < depth; ++i)
    enc_ch[size_t(i)] = std::min<int64_t>(base_filters << i, cap);

  std::vector<int64_t> skip_layer(size_t(depth), -1); // layer index to concat
  int64_t prev = in_ch;
  for (int i = 0; i < depth; ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    net.layers.push_back({LayerSpec::Kind::conv, name, prev, enc_ch[size_t(i)],
                          4, 2, 1});
    detail::init_conv(net, name, enc_ch[size_t(i)], prev, 4, rng, false);
    if (i > 0) {
      net.layers.push_back({LayerSpec::Kind::instance_norm, name + ".norm",
                            enc_ch[size_t(i)]});
      detail::init_norm(net, name + ".norm", enc_ch[size_t(i)]);
    }
    LayerSpec act{LayerSpec::Kind::activation, ""};
    act.act = Activation::leaky_relu;
    net.layers.push_back(act);
    net.layers.back().save_skip = true;
    skip_layer[size_t(i)] = int64_t(net.layers.size()) - 1;
    prev = enc_ch[size_t(i)];
  }

  for (int i = depth - 1; i >= 1; --i) {
    const std::string name = "dec" + std::to_string(i + 1);
    const int64_t target = enc_ch[size_t(i - 1)];
    net.layers.push_back({LayerSpec::Kind::conv_transpose, name, prev, target,
                          4, 2, 1});
    detail::init_conv(net, name, prev, target, 4, rng, true);
    net.layers.push_back({LayerSpec::Kind::instance_norm, name + ".norm", target});
    detail::init_norm(net, name + ".norm", target);
    LayerSpec act{LayerSpec::Kind::activation, ""};
    act.act = Activation::relu;
    net.layers.push_back(act);
    LayerSpec cat{LayerSpec::Kind::concat_skip, ""};
    cat.skip_index = skip_layer[size_t(i - 1)];
    net.layers.push_back(cat);
    prev = 2 * target;
  }

  net.layers.push_back({LayerSpec::Kind::conv_transpose, "out", prev, out_ch,
                        4, 2, 1});
  detail::init_conv(net, "out", prev, out_ch, 4, rng, true);
  LayerSpec act{LayerSpec::Kind::activation, ""};
  act.act = Activation::tanh;
  net.layers.push_back(act);
  return net;
}

// PatchGAN discriminator: C(base) -> C(2*base) -> C(4*base) at K=4/s=2/p=1,
// C(8*base) at stride 1, then a 1-channel conv at stride 1. Raw scores out;
// the losses consume logits.
template <class S>
NetworkT<S> build_discriminator_t(int64_t image_size, int64_t base_filters,
                                  int64_t in_ch, uint64_t init_seed = 2) {
  if (!detail::power_of_two(image_size) || image_size < 64 || image_size > 256)
    throw ConfigError("discriminator: image_size must be a power of two in [64, 256]");
  if (base_filters < 1) throw ConfigError("discriminator: base_filters must be >= 1");
  NetworkT<S> net;
  net.meta = {NetRole::discriminator, in_ch, 1, image_size, base_filters};
  Rng rng(init_seed);

  struct Stage {
    int64_t ch;
    int64_t stride;
    bool norm;
  };
  const std::vector<Stage> stages = {{base_filters, 2, false},
                                     {base_filters * 2, 2, true},
                                     {base_filters * 4, 2, true},
                                     {base_filters * 8, 1, true}};
  int64_t prev = in_ch;
  for (size_t i = 0; i < stages.size(); ++i) {
    const std::string name = "d" + std::to_string(i + 1);
    net.layers.push_back({LayerSpec::Kind::conv, name, prev, stages[i].ch, 4,
                          stages[i].stride, 1});
    detail::init_conv(net, name, stages[i].ch, prev, 4, rng, false);
    if (stages[i].norm) {
      net.layers.push_back({LayerSpec::Kind::instance_norm, name + ".norm",
                            stages[i].ch});
      detail::init_norm(net, name + ".norm", stages[i].ch);
    }
    LayerSpec act{LayerSpec::Kind::activation, ""};
    act.act = Activation::leaky_relu;
    net.layers.push_back(act);
    prev = stages[i].ch;
  }
  net.layers.push_back({LayerSpec::Kind::conv, "score", prev, 1, 4, 1, 1});
  detail::init_conv(net, "score", 1, prev, 4, rng, false);
  return net;
}

inline Network build_generator(int64_t image_size, int64_t base_filters,
                               int64_t in_ch = 3, int64_t out_ch = 3,
                               uint64_t init_seed = 1) {
  return build_generator_t<float>(image_size, base_filters, in_ch, out_ch,
                                  init_seed);
}

inline Network build_discriminator(int64_t image_size, int64_t base_filters,
                                   int64_t in_ch, uint64_t init_seed = 2) {
  return build_discriminator_t<float>(image_size, base_filters, in_ch, init_seed);
}

// Receptive field of one output score: RF <- RF + (K-1) * product of
// earlier strides, over the conv layers in order.
template <class S>
int64_t patch_receptive_field(const NetworkT<S>& net) {
  if (net.meta.role != NetRole::discriminator)
    throw ConfigError("patch_receptive_field: network is not a discriminator");
  int64_t rf = 1, stride_prod = 1;
  for (const auto& l : net.layers) {
    if (l.kind != LayerSpec::Kind::conv &&
        l.kind != LayerSpec::Kind::conv_transpose)
      continue;
    rf += (l.kernel - 1) * stride_prod;
    stride_prod *= l.stride;
  }
  return rf;
}

// Analytic output spatial size of the discriminator score map.
inline int64_t score_map_size(int64_t image_size) {
  int64_t s = image_size;
  for (int i = 0; i < 3; ++i) s = (s + 2 - 4) / 2 + 1; // three stride-2 stages
  s = (s + 2 - 4) / 1 + 1;                             // C(8*base) stage
  s = (s + 2 - 4) / 1 + 1;                             // score conv
  return s;
}

} // namespace rwgan::nets
