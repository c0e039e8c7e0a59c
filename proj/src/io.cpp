#include "hdppt/io.hpp"

#include <cstring>
#include <fstream>

HDPPT_NAMESPACE_BEGIN

namespace fs = std::filesystem;

namespace {
constexpr char kMagic[8] = {'H', 'D', 'P', 'P', 'T', 'C', 'K', '1'};
constexpr int kCheckpointVersion = 1;
}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_jsonl(const fs::path& path, std::span<const Json> records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json utterance_to_json(const Utterance& u, const std::string& codec_fingerprint) {
  Json j;
  j["utt_id"] = u.utt_id;
  j["text"] = u.text;
  j["style_id"] = u.style_id;
  j["prompt"] = u.prompt;
  j["speech"] = u.speech;
  if (!u.content.empty() || !u.prompt_tokens.empty()) {
    j["content"] = u.content;
    j["prompt_tokens"] = u.prompt_tokens;
    j["codec_fingerprint"] = codec_fingerprint;
  }
  return j;
}

Utterance utterance_from_json(const Json& j) {
  try {
    Utterance u;
    u.utt_id = j.at("utt_id").get<std::string>();
    u.text = j.at("text").get<std::string>();
    u.style_id = j.at("style_id").get<int>();
    u.prompt = j.at("prompt").get<std::string>();
    u.speech = j.at("speech").get<std::vector<int>>();
    if (j.contains("content")) u.content = j.at("content").get<std::vector<int>>();
    if (j.contains("prompt_tokens")) u.prompt_tokens = j.at("prompt_tokens").get<std::vector<int>>();
    return u;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed utterance record: ") + e.what());
  }
}

void write_unit_table(const fs::path& path, const UnitTable& table) {
  std::vector<Json> rows;
  for (int c = 0; c < text::kNumChars; ++c) {
    Json r;
    r["char"] = std::string(1, text::kChars[c]);
    r["units"] = table.rows[c];
    rows.push_back(r);
  }
  write_jsonl(path, rows);
}

UnitTable read_unit_table(const fs::path& path) {
  UnitTable table;
  table.rows.assign(text::kNumChars, {});
  for (const auto& r : read_jsonl(path)) {
    const auto ch = r.at("char").get<std::string>();
    if (ch.size() != 1) throw DataError("unit table: bad char entry");
    table.rows[text::char_id(ch[0])] = r.at("units").get<std::vector<int>>();
  }
  table.units_per_char = static_cast<int>(table.rows[0].size());
  for (const auto& row : table.rows) {
    if (static_cast<int>(row.size()) != table.units_per_char || row.empty())
      throw DataError("unit table: missing or ragged rows");
  }
  return table;
}

void write_corpus(const fs::path& dir, const Corpus& corpus, const Json& world_cfg) {
  fs::create_directories(dir);
  auto dump = [&](const std::string& name, const std::vector<Utterance>& utts) {
    std::vector<Json> recs;
    recs.reserve(utts.size());
    for (const auto& u : utts) recs.push_back(utterance_to_json(u));
    write_jsonl(dir / (name + ".jsonl"), recs);
  };
  dump("train", corpus.train);
  dump("dev", corpus.dev);
  dump("test", corpus.test);
  write_unit_table(dir / "unit_table.jsonl", corpus.table);
  Json manifest;
  manifest["world"] = world_cfg;
  manifest["counts"] = {{"train", corpus.train.size()}, {"dev", corpus.dev.size()}, {"test", corpus.test.size()}};
  write_json(dir / "manifest.json", manifest);
}

std::vector<Utterance> read_split(const fs::path& dir, const std::string& split) {
  std::vector<Utterance> out;
  for (const auto& j : read_jsonl(dir / (split + ".jsonl"))) out.push_back(utterance_from_json(j));
  return out;
}

void save_checkpoint(const fs::path& path, const std::string& kind, const Json& meta,
                     const ParamStore& store) {
  Json header;
  header["kind"] = kind;
  header["version"] = kCheckpointVersion;
  header["meta"] = meta;
  Json shapes = Json::array();
  for (const auto& [name, v] : store.params()) shapes.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}});
  header["params"] = shapes;
  const std::string h = header.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  std::vector<float> buf;
  for (const auto& [name, v] : store.params()) {
    buf.assign(v.value().data.begin(), v.value().data.end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1u << 28))
    throw DataError("not a checkpoint file: " + path.string());
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  Json header;
  try {
    header = Json::parse(h);
    if (header.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    ck.kind = header.at("kind").get<std::string>();
    ck.meta = header.at("meta");
  } catch (const Json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  std::vector<float> buf;
  for (const auto& p : header.at("params")) {
    Mat m(p.at("rows").get<int>(), p.at("cols").get<int>());
    buf.resize(m.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    std::copy(buf.begin(), buf.end(), m.data.begin());
    ck.params.emplace_back(p.at("name").get<std::string>(), std::move(m));
  }
  return ck;
}

void load_params(const Checkpoint& ck, ParamStore& store) {
  if (ck.params.size() != store.params().size())
    throw DataError("checkpoint parameter count does not match the model");
  for (const auto& [name, m] : ck.params) {
    if (!store.contains(name)) throw DataError("checkpoint has unknown parameter " + name);
    Var v = store.get(name);
    if (!v.value().same_shape(m)) throw DataError("checkpoint shape mismatch for " + name);
    v.mutable_value().data = m.data;
  }
}

std::string fingerprint(const Json& config, const ParamStore& store) {
  const std::string c = config.dump();
  std::uint64_t h = fnv1a64(c.data(), c.size());
  std::vector<float> buf;
  for (const auto& [name, v] : store.params()) {
    h = fnv1a64(name.data(), name.size(), h);
    buf.assign(v.value().data.begin(), v.value().data.end());
    h = fnv1a64(buf.data(), buf.size() * sizeof(float), h);
  }
  return hex64(h);
}

HDPPT_NAMESPACE_END
