#include "graphids/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>

#include <yaml-cpp/yaml.h>

#include "graphids/error.hpp"

namespace graphids {

Variant parse_variant(std::string_view s) {
  if (s == "graphids") return Variant::GraphIds;
  if (s == "t_mae") return Variant::TMae;
  if (s == "simple_ae") return Variant::SimpleAe;
  throw Error("unknown variant '" + std::string(s) + "' (expected graphids|t_mae|simple_ae)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::GraphIds:
      return "graphids";
    case Variant::TMae:
      return "t_mae";
    case Variant::SimpleAe:
      return "simple_ae";
  }
  return "graphids";
}

namespace {

std::string fmt_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, p);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [p, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || p != last)
    throw Error("config: invalid value '" + text + "' for " + key);
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define INT_FIELD(name)                                                                  \
  Field {                                                                                \
    #name, [](const TrainConfig& c) { return std::to_string(c.name); },                 \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<decltype(c.name)>(#name, v); } \
  }
#define DOUBLE_FIELD(name)                                                               \
  Field {                                                                                \
    #name, [](const TrainConfig& c) { return fmt_double(c.name); },                     \
        [](TrainConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"variant", [](const TrainConfig& c) { return std::string(variant_name(c.variant)); },
            [](TrainConfig& c, const std::string& v) { c.variant = parse_variant(v); }},
      INT_FIELD(edim_out),
      INT_FIELD(gnn_hidden),
      INT_FIELD(nhops),
      INT_FIELD(fanout),
      Field{"agg_type", [](const TrainConfig& c) { return c.agg_type; },
            [](TrainConfig& c, const std::string& v) { c.agg_type = v; }},
      DOUBLE_FIELD(gnn_dropout),
      Field{"direction", [](const TrainConfig& c) { return std::string(direction_name(c.direction)); },
            [](TrainConfig& c, const std::string& v) { c.direction = parse_direction(v); }},
      INT_FIELD(num_layers),
      INT_FIELD(embed_dim),
      INT_FIELD(num_heads),
      INT_FIELD(ff_dim),
      INT_FIELD(window_size),
      INT_FIELD(ae_batch_size),
      DOUBLE_FIELD(mask_ratio),
      Field{"mask_mode", [](const TrainConfig& c) { return std::string(mask_mode_name(c.mask_mode)); },
            [](TrainConfig& c, const std::string& v) { c.mask_mode = parse_mask_mode(v); }},
      DOUBLE_FIELD(ae_dropout),
      Field{"positional_encoding",
            [](const TrainConfig& c) { return std::string(positional_kind_name(c.positional_encoding)); },
            [](TrainConfig& c, const std::string& v) { c.positional_encoding = parse_positional_kind(v); }},
      INT_FIELD(simple_ae_hidden),
      Field{"simple_ae_bottleneck",
            [](const TrainConfig& c) {
              return c.simple_ae_bottleneck < 0 ? std::string("auto") : std::to_string(c.simple_ae_bottleneck);
            },
            [](TrainConfig& c, const std::string& v) {
              c.simple_ae_bottleneck = v == "auto" ? -1 : parse_number<int>("simple_ae_bottleneck", v);
            }},
      DOUBLE_FIELD(learning_rate),
      DOUBLE_FIELD(gnn_weight_decay),
      DOUBLE_FIELD(ae_weight_decay),
      INT_FIELD(gnn_batch_size),
      INT_FIELD(max_epochs),
      INT_FIELD(patience),
      DOUBLE_FIELD(grad_clip),
      INT_FIELD(seed),
  };
  return f;
}

#undef INT_FIELD
#undef DOUBLE_FIELD

void require(bool ok, const std::string& message) {
  if (!ok) throw Error("config: " + message);
}

}  // namespace

void TrainConfig::validate() const {
  require(edim_out >= 1, "edim_out must be >= 1");
  require(gnn_hidden >= 0, "gnn_hidden must be >= 0");
  require(nhops >= 1, "nhops must be >= 1");
  require(fanout >= 1, "fanout must be >= 1");
  require(agg_type == "mean", "agg_type '" + agg_type + "' is not supported (only mean)");
  require(gnn_dropout >= 0.0 && gnn_dropout < 1.0, "gnn_dropout must lie in [0, 1)");
  require(num_layers >= 1, "num_layers must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(num_heads >= 0 && ff_dim >= 0, "num_heads and ff_dim must be >= 0");
  resolve_heads(embed_dim, num_heads);
  require(window_size >= 1, "window_size must be >= 1");
  require(ae_batch_size >= 1, "ae_batch_size must be >= 1");
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, "mask_ratio must lie in [0, 1)");
  require(ae_dropout >= 0.0 && ae_dropout < 1.0, "ae_dropout must lie in [0, 1)");
  require(positional_encoding != PositionalKind::Sinusoidal || embed_dim % 2 == 0,
          "sinusoidal positional encoding needs an even embed_dim");
  require(simple_ae_hidden >= 0, "simple_ae_hidden must be >= 0");
  require(simple_ae_bottleneck != 0, "simple_ae_bottleneck must be positive (or auto)");
  require(simple_ae_bottleneck >= -1, "simple_ae_bottleneck must be positive (or auto)");
  require(learning_rate > 0.0 && learning_rate < 1.0, "learning_rate must lie in (0, 1)");
  require(gnn_weight_decay >= 0.0 && ae_weight_decay >= 0.0, "weight decay must be >= 0");
  require(learning_rate * std::max(gnn_weight_decay, ae_weight_decay) < 1.0,
          "learning_rate * weight_decay must be < 1");
  require(gnn_batch_size >= 1, "gnn_batch_size must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(patience >= 1 && patience <= max_epochs, "patience must lie in [1, max_epochs]");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw Error("config: unknown key '" + key + "'");
}

TrainConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config: malformed YAML: ") + e.what());
  }
  TrainConfig c;
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw Error("config: top level must be a mapping");
  for (const auto& kv : root) {
    if (!kv.second.IsScalar())
      throw Error("config: value of '" + kv.first.as<std::string>() + "' must be a scalar");
    c.set(kv.first.as<std::string>(), kv.second.as<std::string>());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

std::string config_to_yaml(const TrainConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.items()) out += k + ": " + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const TrainConfig& config) {
  std::string canon;
  // Graph-encoder keys have no effect on the graph-free variant.
  static const std::set<std::string> graph_only = {"edim_out",    "gnn_hidden", "nhops",
                                                   "fanout",      "agg_type",   "gnn_dropout",
                                                   "direction",   "gnn_weight_decay"};
  for (const auto& [k, v] : config.items()) {
    if (k == "seed") continue;
    if (config.variant == Variant::TMae && graph_only.count(k) != 0) continue;
    canon += k + "=" + v + ";";
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
  return buf;
}

GnnConfig gnn_config(const TrainConfig& config, int feature_dim) {
  GnnConfig g;
  g.feature_dim = feature_dim;
  g.hidden_dim = config.gnn_hidden > 0 ? config.gnn_hidden : config.edim_out;
  g.out_dim = config.edim_out;
  g.layers = config.nhops;
  g.dropout = config.gnn_dropout;
  return g;
}

MaeConfig mae_config(const TrainConfig& config, int input_dim) {
  MaeConfig m;
  m.input_dim = input_dim;
  m.model_dim = config.embed_dim;
  m.num_layers = config.num_layers;
  m.num_heads = config.num_heads;
  m.ff_dim = config.ff_dim;
  m.dropout = config.ae_dropout;
  m.positional = config.positional_encoding;
  m.window_size = config.window_size;
  m.mask_mode = config.mask_mode;
  return m;
}

SimpleAeConfig simple_ae_config(const TrainConfig& config, int input_dim) {
  SimpleAeConfig s = default_simple_ae(input_dim);
  if (config.simple_ae_hidden > 0) s.hidden_dim = config.simple_ae_hidden;
  if (config.simple_ae_bottleneck >= 0) s.bottleneck = config.simple_ae_bottleneck;
  return s;
}

SamplerOptions sampler_options(const TrainConfig& config) {
  SamplerOptions s;
  s.hops = config.nhops;
  s.fanout = config.fanout;
  s.direction = config.direction;
  return s;
}

int reconstruction_dim(const TrainConfig& config, int feature_dim) {
  return config.variant == Variant::TMae ? feature_dim : config.edim_out;
}

}  // namespace graphids
