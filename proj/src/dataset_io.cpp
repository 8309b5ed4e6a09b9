// Dataset directory layout:
//
//   manifest.json   {"format": "daf-dataset", "format_version": 1,
//                    "dims": {"text": 768, "audio": 74, "video": 35},
//                    "encoding": "jsonl" | "binary",
//                    "splits": {"train": ..., "val": ..., "test": ...},
//                    "label_range": [-3, 3],
//                    "embeddings": {"text": ..., "audio": ..., "video": ...}}
//   <split files>   one per split, in the declared encoding
//
// JSON lines: one object per record,
//   {"id": str, "label": num, "text": [...], "audio": [[...], ...], "video": [[...], ...]}
// with non-finite values written as the strings "NaN", "Inf", "-Inf" and an
// optional "informative" field (synthetic data only).
//
// Binary (all integers and doubles little-endian):
//   file    := "DAFREC01" u64:count record*
//   record  := u32:id_len id_bytes f64:label u8:informative(0xFF = none)
//              u64:text_len f64[text_len] seq(audio) seq(video)
//   seq     := u64:frames u64:width f64[frames*width]

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "daf/data.hpp"
#include "daf/error.hpp"

namespace daf {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr char kBinaryMagic[8] = {'D', 'A', 'F', 'R', 'E', 'C', '0', '1'};
constexpr const char* kSplitNames[3] = {"train", "val", "test"};

// ---------------------------------------------------------------------------
// JSON values

ojson encode_real(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  return v;
}

double decode_real(const ojson& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Inf") return std::numeric_limits<double>::infinity();
    if (s == "-Inf") return -std::numeric_limits<double>::infinity();
  }
  throw DataError(where + ": expected a number, got " + j.dump());
}

ojson encode_vector(std::span<const double> v) {
  ojson arr = ojson::array();
  for (double x : v) arr.push_back(encode_real(x));
  return arr;
}

ojson encode_sequence(const Sequence& s) {
  ojson arr = ojson::array();
  for (std::size_t t = 0; t < s.frames; ++t) arr.push_back(encode_vector(s.frame(t)));
  return arr;
}

std::vector<double> decode_vector(const ojson& j, const std::string& where) {
  if (!j.is_array()) throw DataError(where + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(decode_real(x, where));
  return out;
}

Sequence decode_sequence(const ojson& j, std::size_t width, const std::string& where) {
  if (!j.is_array()) throw DataError(where + ": expected an array of frames");
  Sequence s;
  s.width = width;
  s.frames = j.size();
  s.values.reserve(s.frames * width);
  for (const auto& frame : j) {
    auto v = decode_vector(frame, where);
    if (v.size() != width) {
      throw DataError(where + ": frame width " + std::to_string(v.size()) + " does not match manifest width " +
                      std::to_string(width));
    }
    s.values.insert(s.values.end(), v.begin(), v.end());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Binary primitives

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& where) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError(where + ": truncated record");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_reals(std::ostream& os, std::span<const double> v) {
  for (double x : v) put<double>(os, x);
}

std::vector<double> get_reals(std::istream& is, std::uint64_t n, const std::string& where) {
  if (n > (1ULL << 32)) throw DataError(where + ": implausible array length");
  std::vector<double> v(n);
  for (auto& x : v) x = get<double>(is, where);
  return v;
}

// ---------------------------------------------------------------------------

struct ParseContext {
  Dims dims;
  double label_lo = -3.0;
  double label_hi = 3.0;
  std::size_t dropped = 0;
};

// Validates a decoded record and decides whether it is retained.
bool accept(Utterance& u, ParseContext& ctx, const std::string& where) {
  if (!std::isfinite(u.label) || u.label < ctx.label_lo || u.label > ctx.label_hi) {
    throw DataError(where + ": label " + std::to_string(u.label) + " outside [" + std::to_string(ctx.label_lo) +
                    ", " + std::to_string(ctx.label_hi) + "]");
  }
  if (u.text.empty() || u.audio.frames == 0 || u.video.frames == 0) {
    ++ctx.dropped;
    return false;
  }
  if (u.text.size() != ctx.dims.text) {
    throw DataError(where + ": text width " + std::to_string(u.text.size()) + " does not match manifest width " +
                    std::to_string(ctx.dims.text));
  }
  if (u.audio.width != ctx.dims.audio || u.video.width != ctx.dims.video) {
    throw DataError(where + ": frame width does not match manifest dims");
  }
  return true;
}

std::vector<Utterance> read_jsonl(const fs::path& file, ParseContext& ctx) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open split file " + file.string());
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = file.filename().string() + ":" + std::to_string(line_no);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      throw DataError(where + ": record has no string 'id'");
    }
    Utterance u;
    u.id = j["id"].get<std::string>();
    where += " (id " + u.id + ")";
    for (const char* key : {"label", "text", "audio", "video"}) {
      if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
    }
    u.label = decode_real(j["label"], where);
    u.text = decode_vector(j["text"], where);
    u.audio = decode_sequence(j["audio"], ctx.dims.audio, where);
    u.video = decode_sequence(j["video"], ctx.dims.video, where);
    if (j.contains("informative")) u.informative = parse_modality(j["informative"].get<std::string>());
    if (accept(u, ctx, where)) out.push_back(std::move(u));
  }
  return out;
}

void write_jsonl(const fs::path& file, const std::vector<Utterance>& samples) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot write " + file.string());
  for (const auto& u : samples) {
    ojson j;
    j["id"] = u.id;
    j["label"] = encode_real(u.label);
    j["text"] = encode_vector(u.text);
    j["audio"] = encode_sequence(u.audio);
    j["video"] = encode_sequence(u.video);
    if (u.informative) j["informative"] = std::string(modality_name(*u.informative));
    os << j.dump() << '\n';
  }
  if (!os) throw DataError("write failed for " + file.string());
}

std::vector<Utterance> read_binary(const fs::path& file, ParseContext& ctx) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open split file " + file.string());
  const std::string name = file.filename().string();
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kBinaryMagic, 8) != 0) {
    throw DataError(name + ": not a binary record file");
  }
  const auto count = get<std::uint64_t>(in, name);
  std::vector<Utterance> out;
  for (std::uint64_t r = 0; r < count; ++r) {
    std::string where = name + ": record " + std::to_string(r);
    Utterance u;
    const auto id_len = get<std::uint32_t>(in, where);
    u.id.resize(id_len);
    if (!in.read(u.id.data(), id_len)) throw DataError(where + ": truncated id");
    where += " (id " + u.id + ")";
    u.label = get<double>(in, where);
    const auto inf = get<std::uint8_t>(in, where);
    if (inf != 0xFF) {
      if (inf > 2) throw DataError(where + ": bad informative tag");
      u.informative = static_cast<Modality>(inf);
    }
    u.text = get_reals(in, get<std::uint64_t>(in, where), where);
    for (Sequence* s : {&u.audio, &u.video}) {
      s->frames = get<std::uint64_t>(in, where);
      s->width = get<std::uint64_t>(in, where);
      s->values = get_reals(in, s->frames * s->width, where);
      if (s->frames == 0) s->width = (s == &u.audio) ? ctx.dims.audio : ctx.dims.video;
    }
    if (accept(u, ctx, where)) out.push_back(std::move(u));
  }
  return out;
}

void write_binary(const fs::path& file, const std::vector<Utterance>& samples) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot write " + file.string());
  os.write(kBinaryMagic, 8);
  put<std::uint64_t>(os, samples.size());
  for (const auto& u : samples) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(u.id.size()));
    os.write(u.id.data(), static_cast<std::streamsize>(u.id.size()));
    put<double>(os, u.label);
    put<std::uint8_t>(os, u.informative ? static_cast<std::uint8_t>(*u.informative) : 0xFF);
    put<std::uint64_t>(os, u.text.size());
    put_reals(os, u.text);
    for (const Sequence* s : {&u.audio, &u.video}) {
      put<std::uint64_t>(os, s->frames);
      put<std::uint64_t>(os, s->width);
      put_reals(os, s->values);
    }
  }
  if (!os) throw DataError("write failed for " + file.string());
}

fs::path manifest_path(const fs::path& dir) {
  for (const char* name : {"manifest.json", "manifest"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw DataError("manifest not found in " + dir.string());
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = manifest_path(dir);
  std::ifstream in(mpath);
  ojson m;
  try {
    m = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw DataError("unsupported dataset format version " + std::to_string(version));
    }
    Dataset data;
    const auto& dims = m.at("dims");
    data.dims = {dims.at("text").get<std::size_t>(), dims.at("audio").get<std::size_t>(),
                 dims.at("video").get<std::size_t>()};
    if (m.contains("embeddings")) {
      const auto& e = m["embeddings"];
      data.embeddings = {e.value("text", "text"), e.value("audio", "audio"), e.value("video", "video")};
    }
    ParseContext ctx;
    ctx.dims = data.dims;
    if (m.contains("label_range")) {
      ctx.label_lo = m["label_range"].at(0).get<double>();
      ctx.label_hi = m["label_range"].at(1).get<double>();
    }
    const std::string encoding = m.value("encoding", "jsonl");
    if (encoding != "jsonl" && encoding != "binary") throw DataError("unknown dataset encoding '" + encoding + "'");
    Split* splits[3] = {&data.train, &data.val, &data.test};
    for (int i = 0; i < 3; ++i) {
      const fs::path file = dir / m.at("splits").at(kSplitNames[i]).get<std::string>();
      splits[i]->samples = encoding == "jsonl" ? read_jsonl(file, ctx) : read_binary(file, ctx);
    }
    data.dropped = ctx.dropped;
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
}

void save_dataset(const Dataset& data, const fs::path& dir, Encoding encoding) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const bool binary = encoding == Encoding::kBinary;
  const char* ext = binary ? ".bin" : ".jsonl";

  ojson m;
  m["format"] = "daf-dataset";
  m["format_version"] = kDatasetFormatVersion;
  m["dims"] = {{"text", data.dims.text}, {"audio", data.dims.audio}, {"video", data.dims.video}};
  m["encoding"] = binary ? "binary" : "jsonl";
  m["splits"] = ojson::object();
  for (const char* name : kSplitNames) m["splits"][name] = std::string(name) + ext;
  m["label_range"] = {-3.0, 3.0};
  m["embeddings"] = {{"text", data.embeddings.text}, {"audio", data.embeddings.audio}, {"video", data.embeddings.video}};
  {
    std::ofstream os(dir / "manifest.json", std::ios::binary);
    if (!os) throw DataError("cannot write manifest in " + dir.string());
    os << m.dump(2) << '\n';
  }
  const Split* splits[3] = {&data.train, &data.val, &data.test};
  for (int i = 0; i < 3; ++i) {
    const fs::path file = dir / (std::string(kSplitNames[i]) + ext);
    if (binary) {
      write_binary(file, splits[i]->samples);
    } else {
      write_jsonl(file, splits[i]->samples);
    }
  }
}

}  // namespace daf
