#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "hdppt/nn.hpp"
#include "hdppt/world.hpp"

HDPPT_NAMESPACE_BEGIN

using Json = nlohmann::ordered_json;

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

void write_jsonl(const std::filesystem::path& path, std::span<const Json> records);
std::vector<Json> read_jsonl(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

Json utterance_to_json(const Utterance& u, const std::string& codec_fingerprint = "");
Utterance utterance_from_json(const Json& j);

/// Corpus directory layout: {train,dev,test}.jsonl, unit_table.jsonl and
/// manifest.json (world config and split counts).
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const Json& world_cfg);
std::vector<Utterance> read_split(const std::filesystem::path& dir, const std::string& split);
UnitTable read_unit_table(const std::filesystem::path& path);
void write_unit_table(const std::filesystem::path& path, const UnitTable& table);

/// Binary checkpoint: 8-byte magic, u64 header length, JSON header (kind,
/// version, metadata, parameter names and shapes), then float32 values in
/// header order.
struct Checkpoint {
  std::string kind;
  Json meta;
  std::vector<std::pair<std::string, Mat>> params;
};
void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const Json& meta,
                     const ParamStore& store);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies values into an existing store; names and shapes must match.
void load_params(const Checkpoint& ck, ParamStore& store);
/// Content hash of a config and every parameter value.
std::string fingerprint(const Json& config, const ParamStore& store);

HDPPT_NAMESPACE_END
