#include "tactile/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "tactile/error.hpp"

namespace tactile {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kInvalidConfig, key + ": " + why);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad(key, "expected a number, got '" + v + "'");
    return d;
  } catch (const std::logic_error&) {
    bad(key, "expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    bad(key, "expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::logic_error&) {
    bad(key, "integer out of range: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define TACTILE_SIZE(KEY, MEMBER)                                                          \
  Field {                                                                                  \
    KEY, [](const ExperimentConfig& c) { return fmt(static_cast<std::size_t>(c.MEMBER)); }, \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {              \
          c.MEMBER = static_cast<decltype(c.MEMBER)>(to_u64(k, v));                        \
        }                                                                                  \
  }
#define TACTILE_REAL(KEY, MEMBER)                                                                          \
  Field {                                                                                                  \
    KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); },                                         \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); } \
  }
#define TACTILE_BOOL(KEY, MEMBER)                                                                        \
  Field {                                                                                                \
    KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); },                                       \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); } \
  }
#define TACTILE_PATH(KEY, MEMBER)                                                                           \
  Field {                                                                                                   \
    KEY, [](const ExperimentConfig& c) { return c.MEMBER.string(); },                                      \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; }                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"data.source",
            [](const ExperimentConfig& c) { return std::string(c.source == DataSource::kSynthetic ? "synthetic" : "manifest"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "synthetic") c.source = DataSource::kSynthetic;
              else if (v == "manifest") c.source = DataSource::kManifest;
              else bad(k, "expected synthetic or manifest, got '" + v + "'");
            }},
      TACTILE_PATH("data.root", data_root),
      TACTILE_PATH("data.manifest", manifest),
      TACTILE_SIZE("data.balance_per_class", balance_per_class),
      Field{"synthetic.mode", [](const ExperimentConfig& c) { return std::string(to_string(c.synthetic.mode)); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                c.synthetic.mode = parse_synthetic_mode(v);
              } catch (const Error&) {
                bad(k, "expected spatial-pair, temporal-pair or mixed, got '" + v + "'");
              }
            }},
      TACTILE_SIZE("synthetic.classes", synthetic.classes),
      Field{"synthetic.shape",
            [](const ExperimentConfig& c) {
              const auto& s = c.synthetic.shape;
              return fmt(s.c) + " " + fmt(s.t) + " " + fmt(s.h) + " " + fmt(s.w);
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              std::istringstream is(v);
              std::string a, b, d, e, extra;
              if (!(is >> a >> b >> d >> e) || (is >> extra)) bad(k, "expected four integers C T H W");
              c.synthetic.shape = {to_u64(k, a), to_u64(k, b), to_u64(k, d), to_u64(k, e)};
            }},
      TACTILE_REAL("synthetic.noise_std", synthetic.noise_std),
      TACTILE_SIZE("synthetic.train_per_class", synthetic.train_per_class),
      TACTILE_SIZE("synthetic.validation_per_class", synthetic.validation_per_class),
      TACTILE_SIZE("synthetic.test_per_class", synthetic.test_per_class),
      TACTILE_SIZE("synthetic.seed", synthetic.seed),
      TACTILE_REAL("synthetic.sample_rate_hz", synthetic.sample_rate_hz),
      TACTILE_SIZE("tubelet.frames", tubelet.frames),
      TACTILE_SIZE("tubelet.patch", tubelet.patch),
      TACTILE_BOOL("embedding.use_spatial", embedding.use_spatial),
      TACTILE_BOOL("embedding.use_temporal", embedding.use_temporal),
      TACTILE_SIZE("encoder.layers", encoder.layers),
      TACTILE_SIZE("encoder.dim", encoder.dim),
      TACTILE_SIZE("encoder.heads", encoder.heads),
      TACTILE_SIZE("encoder.ff_dim", encoder.ff_dim),
      TACTILE_REAL("encoder.dropout", encoder.dropout),
      TACTILE_BOOL("pretrain.enabled", pretrain.enabled),
      TACTILE_REAL("pretrain.mask_ratio", pretrain.mask_ratio),
      TACTILE_REAL("pretrain.beta", pretrain.beta),
      TACTILE_SIZE("pretrain.n_comp", pretrain.n_comp),
      TACTILE_BOOL("pretrain.temporal_task", pretrain.temporal_task),
      TACTILE_SIZE("pretrain.epochs", pretrain.epochs),
      TACTILE_REAL("pretrain.lr", pretrain.lr),
      TACTILE_SIZE("pretrain.batch", pretrain.batch),
      TACTILE_REAL("pretrain.weight_decay", pretrain.weight_decay),
      TACTILE_SIZE("finetune.epochs", finetune.epochs),
      TACTILE_REAL("finetune.lr", finetune.lr),
      TACTILE_SIZE("finetune.batch", finetune.batch),
      TACTILE_REAL("finetune.weight_decay", finetune.weight_decay),
      TACTILE_SIZE("finetune.labeled_samples", finetune.labeled_samples),
      TACTILE_BOOL("finetune.track_train_accuracy", finetune.track_train_accuracy),
      TACTILE_SIZE("run.seed", seed),
      TACTILE_PATH("run.output_dir", output_dir),
  };
  return table;
}

#undef TACTILE_SIZE
#undef TACTILE_REAL
#undef TACTILE_BOOL
#undef TACTILE_PATH

}  // namespace

void ExperimentConfig::validate() const {
  if (source == DataSource::kManifest && data_root.empty()) bad("data.root", "required for manifest data");
  if (source == DataSource::kSynthetic) {
    if (synthetic.classes < 2) bad("synthetic.classes", "must be >= 2");
    if (synthetic.train_per_class == 0) bad("synthetic.train_per_class", "must be >= 1");
    if (!(synthetic.noise_std >= 0)) bad("synthetic.noise_std", "must be >= 0");
  }
  if (tubelet.frames == 0) bad("tubelet.frames", "must be >= 1");
  if (tubelet.patch == 0) bad("tubelet.patch", "must be >= 1");
  if (embedding.dim != encoder.dim) bad("encoder.dim", "embedding dimension follows encoder.dim");
  if (encoder.dim % 2 != 0) bad("encoder.dim", "must be even");
  try {
    encoder.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
  if (!(pretrain.mask_ratio >= 0 && pretrain.mask_ratio < 1)) bad("pretrain.mask_ratio", "must lie in [0, 1)");
  if (!(pretrain.beta >= 0)) bad("pretrain.beta", "must be >= 0");
  if (pretrain.batch == 0) bad("pretrain.batch", "must be >= 1");
  if (!(pretrain.lr > 0)) bad("pretrain.lr", "must be > 0");
  if (finetune.batch == 0) bad("finetune.batch", "must be >= 1");
  if (!(finetune.lr > 0)) bad("finetune.lr", "must be > 0");
  if (output_dir.empty()) bad("run.output_dir", "must not be empty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return serialize(a) == serialize(b); }

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;

  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) bad(key, "unknown key");
    it->second->set(config, key, value);
  }
  config.embedding.dim = config.encoder.dim;
  config.synthetic.tubelet_frames = config.tubelet.frames;
  config.synthetic.patch = config.tubelet.patch;
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const std::string s = f.key.substr(0, f.key.find('.'));
    if (s != section) {
      if (!section.empty()) os << '\n';
      section = s;
    }
    os << f.key << " = " << f.get(config) << '\n';
  }
  return os.str();
}

ModelConfig model_config(const ExperimentConfig& config, const Shape4& input_shape, std::size_t num_classes) {
  ModelConfig m;
  m.input_shape = input_shape;
  m.tubelet = config.tubelet;
  m.embedding = config.embedding;
  m.embedding.dim = config.encoder.dim;
  m.encoder = config.encoder;
  m.encoder.seed = config.seed;
  m.num_classes = num_classes;
  return m;
}

}  // namespace tactile
