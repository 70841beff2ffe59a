// SPDX-License-Identifier: Apache-2.0
#include "vp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "vp/errors.hpp"

namespace vp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("invalid number '" + std::string(text) + "'");
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "', expected true or false");
}

const char* kind_name(ShapeKind k) { return k == ShapeKind::square ? "square" : "circle"; }

std::vector<ShapeKind> parse_kinds(std::string_view text) {
  std::vector<ShapeKind> kinds;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    if (item == "square") {
      kinds.push_back(ShapeKind::square);
    } else if (item == "circle") {
      kinds.push_back(ShapeKind::circle);
    } else {
      throw ConfigError("unknown shape kind '" + std::string(item) + "'");
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return kinds;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T, typename Access>
Field number(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return format_number(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(v); }};
}

template <typename Access>
Field boolean(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [access](RunConfig& c, std::string_view v) { access(c) = parse_bool(v); }};
}

#define VP_FIELD(T, sec, member, key) number<T>(sec, key, [](RunConfig& c) -> T& { return c.member; })
#define VP_FLAG(sec, member, key) boolean(sec, key, [](RunConfig& c) -> bool& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        VP_FIELD(std::size_t, "model", model.frame_height, "frame_height"),
        VP_FIELD(std::size_t, "model", model.frame_width, "frame_width"),
        VP_FIELD(std::size_t, "model", model.frame_channels, "frame_channels"),
        VP_FIELD(std::size_t, "model", model.delta, "delta"),
        VP_FIELD(std::size_t, "model", model.channels, "channels"),
        VP_FIELD(std::size_t, "model", model.memory_items, "memory_items"),
        VP_FIELD(std::size_t, "model", model.kernel_size, "kernel_size"),
        VP_FIELD(std::size_t, "model", model.gcpn_steps, "gcpn_steps"),
        VP_FLAG("model", model.use_lfmn, "use_lfmn"),
        VP_FLAG("model", model.use_gcpn, "use_gcpn"),
        VP_FLAG("model", model.skip_connections, "skip_connections"),
        VP_FLAG("model", model.depthwise_filters, "depthwise_filters"),
        VP_FIELD(real, "model", model.leaky_slope, "leaky_slope"),
        VP_FIELD(std::size_t, "model", model.gcpn_max_positions, "gcpn_max_positions"),
        VP_FIELD(real, "model", model.generator_init_std, "generator_init_std"),
        VP_FIELD(real, "model", model.gcpn_output_init_std, "gcpn_output_init_std"),

        VP_FIELD(std::uint32_t, "training", training.epochs, "epochs"),
        VP_FIELD(std::size_t, "training", training.batch_size, "batch_size"),
        VP_FIELD(real, "training", training.lr, "lr"),
        VP_FIELD(real, "training", training.lr_min, "lr_min"),
        VP_FIELD(real, "training", training.lambda_g, "lambda_g"),
        VP_FIELD(std::uint64_t, "training", training.seed, "seed"),

        VP_FIELD(std::size_t, "data", data.sequences, "sequences"),
        VP_FIELD(std::size_t, "data", data.length, "length"),
        VP_FIELD(std::size_t, "data", data.scene.shape_count, "shape_count"),
        VP_FIELD(std::size_t, "data", data.scene.min_size, "min_size"),
        VP_FIELD(std::size_t, "data", data.scene.max_size, "max_size"),
        VP_FIELD(int, "data", data.scene.max_speed, "max_speed"),
        VP_FIELD(double, "data", data.scene.min_intensity, "min_intensity"),
        VP_FIELD(double, "data", data.scene.max_intensity, "max_intensity"),
        VP_FIELD(double, "data", data.scene.background, "background"),
        VP_FLAG("data", data.scene.bounce, "bounce"),
        VP_FIELD(std::uint64_t, "data", data.scene.seed, "seed"),

        VP_FIELD(std::size_t, "eval", eval.held_out, "held_out"),
        VP_FIELD(std::size_t, "eval", eval.rollout_steps, "rollout_steps"),
    };
    f.push_back({"data", "kinds",
                 [](const RunConfig& c) {
                   std::string out;
                   for (ShapeKind k : c.data.scene.kinds) out += (out.empty() ? "" : ",") + std::string(kind_name(k));
                   return out;
                 },
                 [](RunConfig& c, std::string_view v) { c.data.scene.kinds = parse_kinds(v); }});
    return f;
  }();
  return table;
}

#undef VP_FIELD
#undef VP_FLAG

const std::vector<std::string> kSections{"model", "training", "data", "eval"};

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const Field& f : fields()) index[{f.section, f.key}] = &f;

  RunConfig config;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);

    const auto comment = line.find_first_of("#;");
    line = trim(line.substr(0, comment));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = index.find({section, key});
    if (it == index.end()) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + section + "." + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const std::string& section : kSections) {
    if (!out.empty()) out += '\n';
    out += "[" + section + "]\n";
    for (const Field& f : fields()) {
      if (f.section == section) out += f.key + " = " + f.get(*this) + "\n";
    }
  }
  return out;
}

ShapeSceneConfig RunConfig::scene() const {
  ShapeSceneConfig s = data.scene;
  s.height = model.frame_height;
  s.width = model.frame_width;
  s.channels = model.frame_channels;
  return s;
}

void RunConfig::validate() const {
  model.validate();
  training.validate();
  scene().validate();
  if (data.length < 2) throw ConfigError("data: length must be >= 2");
  if (eval.rollout_steps == 0) throw ConfigError("eval: rollout_steps must be >= 1");
}

}  // namespace vp
