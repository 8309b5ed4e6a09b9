#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "daf/checkpoint.hpp"
#include "daf/commands.hpp"
#include "daf/error.hpp"

namespace daf::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const DataError*>(&e)) return kDataError;
  if (dynamic_cast<const DimensionError*>(&e)) return kDataError;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericError;
  return kFailure;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s, const std::string& seps = ",; ") {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (seps.find(c) != std::string::npos) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("'" + v + "' is not a number");
  return d;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) throw ConfigError("'" + v + "' is not a nonnegative integer");
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + v + "' is not on/off");
}

std::array<double, 3> to_triple(const std::string& v) {
  auto parts = split_list(v, ",/ ");
  if (parts.size() != 3) throw ConfigError("'" + v + "' needs three values");
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = to_double(parts[i]);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.path", [](RunConfig& c, const std::string& v) { c.data_path = v; }},
      {"data.split", [](RunConfig& c, const std::string& v) {
         if (v != "train" && v != "val" && v != "test") throw ConfigError("split must be train, val or test");
         c.split = v;
       }},
      {"data.l2_norm", [](RunConfig& c, const std::string& v) { c.train.collate.l2_normalize = to_bool(v); }},
      {"synth.n", [](RunConfig& c, const std::string& v) { c.synthetic.n_samples = to_size(v); }},
      {"synth.noise_std", [](RunConfig& c, const std::string& v) { c.synthetic.noise_std = to_double(v); }},
      {"synth.probs", [](RunConfig& c, const std::string& v) { c.synthetic.modality_probs = to_triple(v); }},
      {"synth.split", [](RunConfig& c, const std::string& v) {
         auto t = to_triple(v);
         const double s = t[0] + t[1] + t[2];
         for (double& x : t) x /= s;
         c.synthetic.split_fractions = t;
       }},
      {"synth.min_frames", [](RunConfig& c, const std::string& v) { c.synthetic.min_frames = to_size(v); }},
      {"synth.max_frames", [](RunConfig& c, const std::string& v) { c.synthetic.max_frames = to_size(v); }},
      {"synth.seed", [](RunConfig& c, const std::string& v) { c.synthetic.seed = to_u64(v); }},
      {"synth.d_text", [](RunConfig& c, const std::string& v) { c.synthetic.dims.text = to_size(v); }},
      {"synth.d_audio", [](RunConfig& c, const std::string& v) { c.synthetic.dims.audio = to_size(v); }},
      {"synth.d_video", [](RunConfig& c, const std::string& v) { c.synthetic.dims.video = to_size(v); }},
      {"model.d_attn", [](RunConfig& c, const std::string& v) { c.model.d_attn = to_size(v); }},
      {"model.d_hidden", [](RunConfig& c, const std::string& v) { c.model.d_hidden = to_size(v); }},
      {"model.encoder", [](RunConfig& c, const std::string& v) { c.model.encoder = parse_encoder_kind(v); }},
      {"model.encoder_hidden", [](RunConfig& c, const std::string& v) { c.model.encoder_hidden = to_size(v); }},
      {"model.fusion", [](RunConfig& c, const std::string& v) { c.model.gate = parse_gate_kind(v); }},
      {"model.input_dropout", [](RunConfig& c, const std::string& v) { c.model.input_dropout = to_double(v); }},
      {"model.output_activation",
       [](RunConfig& c, const std::string& v) { c.model.output = parse_output_activation(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_size(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.max_epochs = to_size(v); }},
      {"train.patience", [](RunConfig& c, const std::string& v) { c.train.patience = to_size(v); }},
      {"train.clip", [](RunConfig& c, const std::string& v) { c.train.clip_max_norm = to_double(v); }},
      {"train.beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = to_double(v); }},
      {"train.beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = to_double(v); }},
      {"train.epsilon", [](RunConfig& c, const std::string& v) { c.train.epsilon = to_double(v); }},
      {"run.modalities", [](RunConfig& c, const std::string& v) { c.modalities = parse_modality_set(v); }},
      {"run.missing_policy",
       [](RunConfig& c, const std::string& v) { c.train.collate.missing = parse_missing_policy(v); }},
      {"run.out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"run.seeds", [](RunConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(s));
       }},
      {"ablate.rows", [](RunConfig& c, const std::string& v) {
         c.ablate_rows.clear();
         for (const auto& s : split_list(v, "; ")) c.ablate_rows.push_back(parse_modality_set(s));
       }},
      {"ablate.fusions", [](RunConfig& c, const std::string& v) {
         c.ablate_fusions.clear();
         for (const auto& s : split_list(v)) c.ablate_fusions.push_back(parse_gate_kind(s));
       }},
      {"ablate.jobs", [](RunConfig& c, const std::string& v) { c.jobs = to_size(v); }},
  };
  return table;
}

}  // namespace

Settings parse_config_text(const std::string& text) {
  Settings out;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

Settings read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig resolve_config(const Settings& settings) {
  RunConfig cfg;
  std::vector<std::string> errors;
  for (const auto& [key, value] : settings) {
    const auto it = setters().find(key);
    if (it == setters().end()) {
      errors.push_back("unknown setting '" + key + "'");
      continue;
    }
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  if (settings.contains("train.epochs") && !settings.contains("train.patience")) {
    cfg.train.patience = std::min(cfg.train.patience, cfg.train.max_epochs);
  }
  for (auto& e : cfg.model.validate()) errors.push_back(std::move(e));
  for (auto& e : cfg.train.validate()) errors.push_back(std::move(e));
  if (cfg.seeds.empty()) errors.push_back("run.seeds must not be empty");
  if (cfg.out_dir.empty()) errors.push_back("run.out must not be empty");
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["data"] = {{"path", cfg.data_path}, {"split", cfg.split}};
  if (cfg.data_path.empty()) {
    const auto& s = cfg.synthetic;
    j["synth"] = {{"n", s.n_samples},
                  {"noise_std", s.noise_std},
                  {"probs", s.modality_probs},
                  {"split", s.split_fractions},
                  {"min_frames", s.min_frames},
                  {"max_frames", s.max_frames},
                  {"seed", s.seed},
                  {"dims", {s.dims.text, s.dims.audio, s.dims.video}}};
  }
  j["model"] = to_json(cfg.model);
  j["train"] = to_json(cfg.train);
  j["run"] = {{"modalities", modality_set_name(cfg.modalities)}, {"out", cfg.out_dir}, {"seeds", cfg.seeds}};
  if (!cfg.ablate_rows.empty() || !cfg.ablate_fusions.empty()) {
    std::vector<std::string> rows, fusions;
    for (const auto& r : cfg.ablate_rows) rows.push_back(modality_set_name(r));
    for (auto f : cfg.ablate_fusions) fusions.emplace_back(gate_kind_name(f));
    j["ablate"] = {{"rows", rows}, {"fusions", fusions}};
  }
  return j;
}

nlohmann::ordered_json artifact_config(const RunConfig& cfg) {
  nlohmann::ordered_json j = to_json(cfg);
  j["run"].erase("out");
  return j;
}

}  // namespace daf::cli
