#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mra/train.hpp"

namespace mra {

nlohmann::json to_json(const EpisodeRecord& rec);
EpisodeRecord record_from_json(const nlohmann::json& j);

// Appends one JSON object per line; flushes after every record so a crashed
// run keeps everything written so far.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const EpisodeRecord& rec);

 private:
  std::ofstream out_;
};

std::vector<EpisodeRecord> read_metrics(const std::filesystem::path& path);

}  // namespace mra
