#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwgan/errors.hpp"
#include "rwgan/manifest.hpp"
#include "rwgan/nets.hpp"
#include "rwgan/png_io.hpp"
#include "rwgan/raster.hpp"
#include "rwgan/rng.hpp"
#include "rwgan/tensor.hpp"

namespace rwgan::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

enum class Mode { pix2pix, cyclegan };
enum class Direction { sat2map, map2sat };

inline std::string mode_str(Mode m) {
  return m == Mode::pix2pix ? "pix2pix" : "cyclegan";
}
inline Mode mode_from_str(const std::string& s) {
  if (s == "pix2pix") return Mode::pix2pix;
  if (s == "cyclegan") return Mode::cyclegan;
  throw ConfigError("train: unknown mode '" + s + "'");
}
inline std::string direction_str(Direction d) {
  return d == Direction::sat2map ? "sat2map" : "map2sat";
}
inline Direction direction_from_str(const std::string& s) {
  if (s == "sat2map") return Direction::sat2map;
  if (s == "map2sat") return Direction::map2sat;
  throw ConfigError("train: unknown direction '" + s + "'");
}

struct TrainConfig {
  Mode mode = Mode::pix2pix;
  Direction direction = Direction::sat2map; // paired generator direction
  int64_t image_size = 256;
  int64_t batch = 1; // frozen to the batch-1 regime
  int64_t epochs = 10;
  double lr = 0.0002;
  double beta1 = 0.5;
  double d_loss_weight = 0.5;
  double lambda_l1 = 100.0;     // pix2pix reconstruction weight
  double lambda_cycle = 10.0;   // cyclegan
  double lambda_identity = 5.0; // cyclegan
  int64_t pool_size = 50;       // cyclegan
  int64_t base_filters = 32;
  uint64_t seed = 0;

  void validate() const {
    if (batch != 1) throw ConfigError("train: batch size is fixed at 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
    if (beta1 < 0 || beta1 >= 1) throw ConfigError("train: beta1 must be in [0,1)");
    if (pool_size < 0) throw ConfigError("train: pool_size must be >= 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline TrainConfig default_config(Mode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = mode == Mode::pix2pix ? 10 : 100;
  return cfg;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"mode", mode_str(c.mode)},
          {"direction", direction_str(c.direction)},
          {"image_size", c.image_size},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"d_loss_weight", c.d_loss_weight},
          {"lambda_l1", c.lambda_l1},
          {"lambda_cycle", c.lambda_cycle},
          {"lambda_identity", c.lambda_identity},
          {"pool_size", c.pool_size},
          {"base_filters", c.base_filters},
          {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.mode = mode_from_str(j.at("mode").get<std::string>());
  c.direction = direction_from_str(j.at("direction").get<std::string>());
  c.image_size = j.at("image_size").get<int64_t>();
  c.batch = j.at("batch").get<int64_t>();
  c.epochs = j.at("epochs").get<int64_t>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.d_loss_weight = j.at("d_loss_weight").get<double>();
  c.lambda_l1 = j.at("lambda_l1").get<double>();
  c.lambda_cycle = j.at("lambda_cycle").get<double>();
  c.lambda_identity = j.at("lambda_identity").get<double>();
  c.pool_size = j.at("pool_size").get<int64_t>();
  c.base_filters = j.at("base_filters").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

// Buffer of past generated images used for discriminator updates. Below
// capacity it stores the offered image and passes it through; at capacity it
// returns a stored image (swapping in the new one) with probability 0.5.
struct ImagePool {
  int64_t capacity = 50;
  std::vector<Tensor> buffer;
  Rng rng;

  Tensor query(const Tensor& fake) {
    if (capacity == 0) return fake;
    if (int64_t(buffer.size()) < capacity) {
      buffer.push_back(fake);
      return fake;
    }
    if (rng.next_double() < 0.5) {
      const size_t j = size_t(rng.next_below(uint64_t(buffer.size())));
      Tensor old = buffer[j];
      buffer[j] = fake;
      return old;
    }
    return fake;
  }
};

struct StepRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  std::map<std::string, double> losses;
};

struct History {
  std::vector<StepRecord> steps;
  std::vector<std::string> sample_image_paths; // one per epoch
};

inline void save_history(const History& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("history: cannot write " + path.string());
  for (const auto& s : h.steps) {
    nlohmann::json j{{"step", s.step}, {"epoch", s.epoch},
                     {"losses", s.losses}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training state and checkpointing

struct TrainState {
  TrainConfig cfg;
  int64_t epochs_done = 0;
  std::string palette = "standard"; // map palette the model was trained on
  std::map<std::string, nets::Network> networks; // "G","D" | "G_ab","G_ba","D_a","D_b"
  std::map<std::string, AdamState> optim;        // "G","D" | "G","D_a","D_b"
  ImagePool pool_a, pool_b;                      // cyclegan only

  nets::Network& net(const std::string& name) {
    auto it = networks.find(name);
    if (it == networks.end())
      throw DataError("train: state has no network '" + name + "'");
    return it->second;
  }
  const nets::Network& net(const std::string& name) const {
    auto it = networks.find(name);
    if (it == networks.end())
      throw DataError("train: state has no network '" + name + "'");
    return it->second;
  }
};

inline TrainState init_state(const TrainConfig& cfg,
                             const std::string& palette_name) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  st.palette = palette_name;
  auto opt = [&] {
    AdamState s;
    s.lr = cfg.lr;
    s.beta1 = cfg.beta1;
    return s;
  };
  if (cfg.mode == Mode::pix2pix) {
    st.networks.emplace("G", nets::build_generator(cfg.image_size,
                                                   cfg.base_filters, 3, 3,
                                                   mix64(cfg.seed, 0x6e1)));
    st.networks.emplace(
        "D", nets::build_discriminator(cfg.image_size, cfg.base_filters, 6,
                                       mix64(cfg.seed, 0xd15c)));
    st.optim.emplace("G", opt());
    st.optim.emplace("D", opt());
  } else {
    st.networks.emplace("G_ab", nets::build_generator(cfg.image_size,
                                                      cfg.base_filters, 3, 3,
                                                      mix64(cfg.seed, 0x6ab)));
    st.networks.emplace("G_ba", nets::build_generator(cfg.image_size,
                                                      cfg.base_filters, 3, 3,
                                                      mix64(cfg.seed, 0x6ba)));
    st.networks.emplace(
        "D_a", nets::build_discriminator(cfg.image_size, cfg.base_filters, 3,
                                         mix64(cfg.seed, 0xd1a)));
    st.networks.emplace(
        "D_b", nets::build_discriminator(cfg.image_size, cfg.base_filters, 3,
                                         mix64(cfg.seed, 0xd1b)));
    st.optim.emplace("G", opt());
    st.optim.emplace("D_a", opt());
    st.optim.emplace("D_b", opt());
    st.pool_a.capacity = cfg.pool_size;
    st.pool_b.capacity = cfg.pool_size;
    st.pool_a.rng.reseed(mix64(cfg.seed, 0x9001a));
    st.pool_b.rng.reseed(mix64(cfg.seed, 0x9001b));
  }
  return st;
}

namespace detail {

inline const char* kMagic = "RWGN";
inline constexpr uint32_t kVersion = 1;

struct DirEntry {
  std::string name;
  Shape shape;
  uint64_t offset; // bytes from payload start
};

inline void append_payload(std::vector<float>& payload,
                           std::vector<DirEntry>& dir, const std::string& name,
                           const Shape& shape, const std::vector<float>& data) {
  dir.push_back({name, shape, payload.size() * sizeof(float)});
  payload.insert(payload.end(), data.begin(), data.end());
}

} // namespace detail

// Layout: "RWGN" | u32 version | u64 header length | header JSON | payload of
// little-endian float32, contiguous in directory order. Save is
// write-temp-then-rename so a crash never leaves a torn file.
inline void save_checkpoint(const TrainState& st,
                            const std::filesystem::path& path) {
  std::vector<float> payload;
  std::vector<detail::DirEntry> dir;

  nlohmann::json nets_json = nlohmann::json::object();
  for (const auto& [name, net] : st.networks) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) layers.push_back(nets::layer_to_json(l));
    nets_json[name] = {
        {"layers", layers},
        {"role", net.meta.role == nets::NetRole::generator ? "generator"
                                                           : "discriminator"},
        {"in_channels", net.meta.in_channels},
        {"out_channels", net.meta.out_channels},
        {"image_size", net.meta.image_size},
        {"base_filters", net.meta.base_filters}};
    for (const auto& [pname, tensor] : net.params)
      detail::append_payload(payload, dir, "net/" + name + "/" + pname,
                             tensor.shape(), tensor.values());
  }

  nlohmann::json optim_json = nlohmann::json::object();
  for (const auto& [name, opt] : st.optim) {
    optim_json[name] = {{"lr", opt.lr},
                        {"beta1", opt.beta1},
                        {"beta2", opt.beta2},
                        {"eps", opt.eps},
                        {"step_count", opt.step_count},
                        {"slots", opt.m.size()}};
    char idx[32];
    for (size_t i = 0; i < opt.m.size(); ++i) {
      std::snprintf(idx, sizeof idx, "%04zu", i);
      detail::append_payload(payload, dir, "optim/" + name + "/m/" + idx,
                             {int64_t(opt.m[i].size())}, opt.m[i]);
      detail::append_payload(payload, dir, "optim/" + name + "/v/" + idx,
                             {int64_t(opt.v[i].size())}, opt.v[i]);
    }
  }

  nlohmann::json pools_json = nlohmann::json::object();
  const std::pair<const char*, const ImagePool*> pools[] = {
      {"a", &st.pool_a}, {"b", &st.pool_b}};
  for (auto [pname, pool] : pools) {
    auto rng_state = pool->rng.state();
    pools_json[pname] = {{"capacity", pool->capacity},
                         {"count", pool->buffer.size()},
                         {"rng", {rng_state[0], rng_state[1], rng_state[2],
                                  rng_state[3]}}};
    char idx[32];
    for (size_t i = 0; i < pool->buffer.size(); ++i) {
      std::snprintf(idx, sizeof idx, "%04zu", i);
      detail::append_payload(payload, dir,
                             std::string("pool/") + pname + "/" + idx,
                             pool->buffer[i].shape(), pool->buffer[i].values());
    }
  }

  nlohmann::json dir_json = nlohmann::json::array();
  for (const auto& e : dir)
    dir_json.push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});

  nlohmann::json header{{"config", config_to_json(st.cfg)},
                        {"epoch", st.epochs_done},
                        {"palette", st.palette},
                        {"networks", nets_json},
                        {"optim", optim_json},
                        {"pools", pools_json},
                        {"tensors", dir_json}};
  const std::string header_str = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + tmp.string());
    out.write(detail::kMagic, 4);
    const uint32_t version = detail::kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(header_str.data(), std::streamsize(header_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              std::streamsize(payload.size() * sizeof(float)));
    if (!out) throw IoError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path.string());
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != detail::kVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in) throw FormatError("checkpoint: truncated header length");
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), std::streamsize(hlen));
  if (!in) throw FormatError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  std::vector<float> payload;
  {
    std::vector<char> bytes(std::istreambuf_iterator<char>(in), {});
    if (bytes.size() % sizeof(float) != 0)
      throw FormatError("checkpoint: payload size not a multiple of 4");
    payload.resize(bytes.size() / sizeof(float));
    std::memcpy(payload.data(), bytes.data(), bytes.size());
  }

  std::vector<detail::DirEntry> dir;
  uint64_t expected_offset = 0;
  for (const auto& e : header.at("tensors")) {
    detail::DirEntry d;
    d.name = e.at("name").get<std::string>();
    d.shape = e.at("shape").get<Shape>();
    d.offset = e.at("offset").get<uint64_t>();
    if (d.offset != expected_offset)
      throw FormatError("checkpoint: non-contiguous tensor directory at '" +
                        d.name + "'");
    expected_offset += uint64_t(numel_of(d.shape)) * sizeof(float);
    dir.push_back(std::move(d));
  }
  if (expected_offset != payload.size() * sizeof(float))
    throw FormatError("checkpoint: truncated or oversized payload");

  auto read_tensor = [&](const detail::DirEntry& e) {
    const size_t start = e.offset / sizeof(float);
    const size_t count = size_t(numel_of(e.shape));
    return std::vector<float>(payload.begin() + long(start),
                              payload.begin() + long(start + count));
  };
  std::map<std::string, const detail::DirEntry*> by_name;
  for (const auto& e : dir) by_name[e.name] = &e;
  auto find_entry = [&](const std::string& name) -> const detail::DirEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("checkpoint: missing tensor '" + name + "'");
    return *it->second;
  };

  TrainState st;
  st.cfg = config_from_json(header.at("config"));
  st.epochs_done = header.at("epoch").get<int64_t>();
  st.palette = header.value("palette", std::string("standard"));

  for (const auto& [name, nj] : header.at("networks").items()) {
    nets::Network net;
    net.meta.role = nj.at("role").get<std::string>() == "generator"
                        ? nets::NetRole::generator
                        : nets::NetRole::discriminator;
    net.meta.in_channels = nj.at("in_channels").get<int64_t>();
    net.meta.out_channels = nj.at("out_channels").get<int64_t>();
    net.meta.image_size = nj.at("image_size").get<int64_t>();
    net.meta.base_filters = nj.at("base_filters").get<int64_t>();
    for (const auto& lj : nj.at("layers"))
      net.layers.push_back(nets::layer_from_json(lj));
    // parameters come from the payload
    for (const auto& e : dir) {
      const std::string prefix = "net/" + name + "/";
      if (e.name.rfind(prefix, 0) == 0)
        net.params.emplace(e.name.substr(prefix.size()),
                           Tensor::from_values(e.shape, read_tensor(e), true));
    }
    st.networks.emplace(name, std::move(net));
  }

  for (const auto& [name, oj] : header.at("optim").items()) {
    AdamState opt;
    opt.lr = oj.at("lr").get<double>();
    opt.beta1 = oj.at("beta1").get<double>();
    opt.beta2 = oj.at("beta2").get<double>();
    opt.eps = oj.at("eps").get<double>();
    opt.step_count = oj.at("step_count").get<int64_t>();
    const size_t slots = oj.at("slots").get<size_t>();
    char idx[32];
    for (size_t i = 0; i < slots; ++i) {
      std::snprintf(idx, sizeof idx, "%04zu", i);
      opt.m.push_back(read_tensor(find_entry("optim/" + name + "/m/" + idx)));
      opt.v.push_back(read_tensor(find_entry("optim/" + name + "/v/" + idx)));
    }
    st.optim.emplace(name, std::move(opt));
  }

  const std::pair<const char*, ImagePool*> pools[] = {{"a", &st.pool_a},
                                                      {"b", &st.pool_b}};
  for (auto [pname, pool] : pools) {
    const auto& pj = header.at("pools").at(pname);
    pool->capacity = pj.at("capacity").get<int64_t>();
    const size_t count = pj.at("count").get<size_t>();
    std::array<uint64_t, 4> rng_state{};
    for (size_t i = 0; i < 4; ++i)
      rng_state[i] = pj.at("rng").at(i).get<uint64_t>();
    pool->rng.set_state(rng_state);
    char idx[32];
    for (size_t i = 0; i < count; ++i) {
      std::snprintf(idx, sizeof idx, "%04zu", i);
      const auto& e = find_entry(std::string("pool/") + pname + "/" + idx);
      pool->buffer.push_back(Tensor::from_values(e.shape, read_tensor(e)));
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Optimization steps

// One paired-training step: D minimizes
//   d_loss_weight * [bce(D(x++y), 1) + bce(D(x++G(x)), 0)]
// with the generated image held constant, then G minimizes
//   bce(D(x++G(x)), 1) + lambda_l1 * L1(G(x), y).
inline std::map<std::string, double> pix2pix_step(
    nets::Network& G, nets::Network& D, const Tensor& x, const Tensor& y,
    const TrainConfig& cfg, AdamState& g_state, AdamState& d_state) {
  if (x.shape() != y.shape())
    throw ShapeError("pix2pix_step: condition/target shape mismatch");

  Tensor fake = G.forward(x);

  // discriminator update, generated image detached
  D.zero_grad();
  Tensor d_real = D.forward(concat_channels(x, y));
  Tensor d_fake = D.forward(concat_channels(x, fake.detach()));
  Tensor ones = Tensor::filled(d_real.shape(), 1.0f);
  Tensor zeros = Tensor::zeros(d_fake.shape());
  Tensor loss_d = scale(add(loss(d_real, ones, LossKind::bce_logits),
                            loss(d_fake, zeros, LossKind::bce_logits)),
                        float(cfg.d_loss_weight));
  backward(loss_d);
  auto d_params = D.param_list();
  adam_step(d_params, d_state);

  // generator update
  G.zero_grad();
  D.zero_grad();
  Tensor d_gen = D.forward(concat_channels(x, fake));
  Tensor ones_g = Tensor::filled(d_gen.shape(), 1.0f);
  Tensor adv = loss(d_gen, ones_g, LossKind::bce_logits);
  Tensor l1 = loss(fake, y, LossKind::l1);
  Tensor loss_g = add(adv, scale(l1, float(cfg.lambda_l1)));
  backward(loss_g);
  auto g_params = G.param_list();
  adam_step(g_params, g_state);
  G.zero_grad();
  D.zero_grad();

  return {{"d", double(loss_d.item())},
          {"g", double(loss_g.item())},
          {"g_adv", double(adv.item())},
          {"g_l1", double(l1.item())}};
}

// One unpaired-training step. Generators minimize
//   mse(D_b(G_ab(a)), 1) + mse(D_a(G_ba(b)), 1)
//   + lambda_cycle * [L1(G_ba(G_ab(a)), a) + L1(G_ab(G_ba(b)), b)]
//   + lambda_identity * [L1(G_ab(b), b) + L1(G_ba(a), a)]
// jointly; each discriminator then minimizes
//   d_loss_weight * [mse(D(real), 1) + mse(D(pool(fake)), 0)].
inline std::map<std::string, double> cyclegan_step(
    nets::Network& G_ab, nets::Network& G_ba, nets::Network& D_a,
    nets::Network& D_b, const Tensor& a, const Tensor& b, ImagePool& pool_a,
    ImagePool& pool_b, const TrainConfig& cfg, AdamState& g_state,
    AdamState& da_state, AdamState& db_state) {
  if (a.shape() != b.shape())
    throw ShapeError("cyclegan_step: domain tensors must share shape");

  G_ab.zero_grad();
  G_ba.zero_grad();
  D_a.zero_grad();
  D_b.zero_grad();

  Tensor fake_b = G_ab.forward(a);
  Tensor fake_a = G_ba.forward(b);

  Tensor score_fb = D_b.forward(fake_b);
  Tensor score_fa = D_a.forward(fake_a);
  Tensor ones_b = Tensor::filled(score_fb.shape(), 1.0f);
  Tensor ones_a = Tensor::filled(score_fa.shape(), 1.0f);
  Tensor adv = add(loss(score_fb, ones_b, LossKind::mse),
                   loss(score_fa, ones_a, LossKind::mse));

  Tensor rec_a = G_ba.forward(fake_b);
  Tensor rec_b = G_ab.forward(fake_a);
  Tensor cyc = add(loss(rec_a, a, LossKind::l1), loss(rec_b, b, LossKind::l1));

  Tensor idt = add(loss(G_ab.forward(b), b, LossKind::l1),
                   loss(G_ba.forward(a), a, LossKind::l1));

  Tensor loss_g = add(adv, add(scale(cyc, float(cfg.lambda_cycle)),
                               scale(idt, float(cfg.lambda_identity))));
  backward(loss_g);
  std::vector<Tensor> g_params = G_ab.param_list();
  for (auto& p : G_ba.param_list()) g_params.push_back(p);
  adam_step(g_params, g_state);

  auto d_update = [&](nets::Network& D, const Tensor& real, Tensor fake,
                      AdamState& state) {
    D.zero_grad();
    Tensor s_real = D.forward(real);
    Tensor s_fake = D.forward(fake);
    Tensor ones = Tensor::filled(s_real.shape(), 1.0f);
    Tensor zeros = Tensor::zeros(s_fake.shape());
    Tensor l = scale(add(loss(s_real, ones, LossKind::mse),
                         loss(s_fake, zeros, LossKind::mse)),
                     float(cfg.d_loss_weight));
    backward(l);
    auto params = D.param_list();
    adam_step(params, state);
    D.zero_grad();
    return double(l.item());
  };

  const double loss_da = d_update(D_a, a, pool_a.query(fake_a.detach()), da_state);
  const double loss_db = d_update(D_b, b, pool_b.query(fake_b.detach()), db_state);

  G_ab.zero_grad();
  G_ba.zero_grad();

  return {{"g", double(loss_g.item())},
          {"g_adv", double(adv.item())},
          {"g_cyc", double(cyc.item())},
          {"g_idt", double(idt.item())},
          {"d_a", loss_da},
          {"d_b", loss_db},
          {"d", loss_da + loss_db}};
}

// normalize -> forward -> denormalize. Input must already match the
// generator's training resolution.
inline raster::RasterImage infer(const nets::Network& G,
                                 const raster::RasterImage& img) {
  if (G.meta.role != nets::NetRole::generator)
    throw ConfigError("infer: network is not a generator");
  if (img.width != img.height || img.width != int(G.meta.image_size))
    throw ShapeError("infer: input must be " +
                     std::to_string(G.meta.image_size) + "x" +
                     std::to_string(G.meta.image_size) + ", got " +
                     std::to_string(img.width) + "x" + std::to_string(img.height));
  return raster::from_unit(G.forward(raster::to_unit(img)));
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  std::filesystem::path final_checkpoint;
  History history;
};

namespace detail {

inline Tensor load_unit_tensor(const DatasetManifest& data,
                               const std::string& rel, int64_t size) {
  raster::RasterImage img = raster::read_png(data.resolve(rel));
  img = raster::resize_bilinear(img, int(size), int(size));
  return raster::to_unit(img);
}

inline std::vector<int64_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<int64_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = int64_t(i);
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

} // namespace detail

// Deterministic epoch loop: per-epoch seeded shuffle, one step per sample,
// history at every step, a sample strip plus a checkpoint per epoch.
// `resume_from` restarts an interrupted run; the result is bit-identical to
// the uninterrupted one.
inline TrainResult train_loop(
    const TrainConfig& cfg_in, const DatasetManifest& data,
    const std::filesystem::path& out_dir,
    const std::optional<std::filesystem::path>& resume_from = {}) {
  cfg_in.validate();
  auto train_split = data.split("train");
  if (train_split.empty())
    throw ConfigError("train: manifest has no records in the train split");

  TrainState st;
  if (resume_from) {
    st = load_checkpoint(*resume_from);
    TrainConfig resumed = st.cfg;
    resumed.epochs = cfg_in.epochs;
    if (!(resumed == cfg_in))
      throw ConfigError("train: resume config differs from checkpoint config");
    st.cfg = resumed;
    if (st.epochs_done >= cfg_in.epochs)
      throw ConfigError("train: checkpoint already has " +
                        std::to_string(st.epochs_done) + " epochs");
  } else {
    st = init_state(cfg_in, train_split.front()->palette);
  }
  const TrainConfig& cfg = st.cfg;

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw IoError("train: cannot create output directories");

  // preload the training tensors (desk-scale datasets)
  std::vector<Tensor> sats, maps;
  for (const auto* rec : train_split) {
    sats.push_back(detail::load_unit_tensor(data, rec->sat_path, cfg.image_size));
    maps.push_back(detail::load_unit_tensor(data, rec->map_path, cfg.image_size));
  }
  const size_t n = sats.size();

  History history;
  char fname[64];
  for (int64_t epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
    if (cfg.mode == Mode::pix2pix) {
      auto order = detail::shuffled_indices(n, mix64(cfg.seed, uint64_t(epoch), 0x51));
      nets::Network& G = st.net("G");
      nets::Network& D = st.net("D");
      for (size_t i = 0; i < n; ++i) {
        const size_t k = size_t(order[i]);
        const Tensor& x = cfg.direction == Direction::sat2map ? sats[k] : maps[k];
        const Tensor& y = cfg.direction == Direction::sat2map ? maps[k] : sats[k];
        auto losses = pix2pix_step(G, D, x, y, cfg, st.optim.at("G"),
                                   st.optim.at("D"));
        history.steps.push_back(
            {epoch * int64_t(n) + int64_t(i) + 1, epoch, std::move(losses)});
      }
    } else {
      auto order_a = detail::shuffled_indices(n, mix64(cfg.seed, uint64_t(epoch), 0xA));
      auto order_b = detail::shuffled_indices(n, mix64(cfg.seed, uint64_t(epoch), 0xB));
      for (size_t i = 0; i < n; ++i) {
        const Tensor& a = sats[size_t(order_a[i])];
        const Tensor& b = maps[size_t(order_b[i])];
        auto losses = cyclegan_step(st.net("G_ab"), st.net("G_ba"),
                                    st.net("D_a"), st.net("D_b"), a, b,
                                    st.pool_a, st.pool_b, cfg,
                                    st.optim.at("G"), st.optim.at("D_a"),
                                    st.optim.at("D_b"));
        history.steps.push_back(
            {epoch * int64_t(n) + int64_t(i) + 1, epoch, std::move(losses)});
      }
    }

    // progress strip from the first training sample
    {
      raster::RasterImage left, mid, right;
      if (cfg.mode == Mode::pix2pix) {
        const Tensor& x = cfg.direction == Direction::sat2map ? sats[0] : maps[0];
        const Tensor& y = cfg.direction == Direction::sat2map ? maps[0] : sats[0];
        left = raster::from_unit(x);
        mid = raster::from_unit(st.net("G").forward(x));
        right = raster::from_unit(y);
      } else {
        Tensor fake_b = st.net("G_ab").forward(sats[0]);
        left = raster::from_unit(sats[0]);
        mid = raster::from_unit(fake_b);
        right = raster::from_unit(st.net("G_ba").forward(fake_b.detach()));
      }
      std::snprintf(fname, sizeof fname, "samples/epoch_%04lld.png",
                    (long long)epoch + 1);
      raster::write_png(raster::hstack({left, mid, right}), out_dir / fname);
      history.sample_image_paths.push_back(fname);
    }

    st.epochs_done = epoch + 1;
    std::snprintf(fname, sizeof fname, "checkpoints/epoch_%04lld.ckpt",
                  (long long)epoch + 1);
    save_checkpoint(st, out_dir / fname);
  }

  const fs::path final_path = out_dir / "checkpoints" / "final.ckpt";
  save_checkpoint(st, final_path);
  save_history(history, out_dir / "history.jsonl");
  return {final_path, std::move(history)};
}

} // namespace rwgan::train
