#include "mra/metrics.hpp"

#include "mra/errors.hpp"

namespace mra {

nlohmann::json to_json(const EpisodeRecord& rec) {
  nlohmann::json j;
  j["episode"] = rec.episode;
  j["game_id"] = rec.game_id;
  j["role_returns"] = rec.role_returns;
  j["mi_bound"] = rec.mi_bound ? nlohmann::json(*rec.mi_bound) : nlohmann::json(nullptr);
  j["aux_loss"] = rec.aux_loss ? nlohmann::json(*rec.aux_loss) : nlohmann::json(nullptr);
  j["wall_ms"] = rec.wall_ms;
  return j;
}

EpisodeRecord record_from_json(const nlohmann::json& j) {
  EpisodeRecord rec;
  rec.episode = j.at("episode").get<int>();
  rec.game_id = j.at("game_id").get<int>();
  rec.role_returns = j.at("role_returns").get<std::vector<double>>();
  if (j.contains("mi_bound") && !j["mi_bound"].is_null()) rec.mi_bound = j["mi_bound"].get<double>();
  if (j.contains("aux_loss") && !j["aux_loss"].is_null()) rec.aux_loss = j["aux_loss"].get<double>();
  rec.wall_ms = j.value("wall_ms", 0.0);
  return rec;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
}

void MetricsWriter::write(const EpisodeRecord& rec) {
  out_ << to_json(rec).dump() << '\n';
  out_.flush();
}

std::vector<EpisodeRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what(), n);
    }
  }
  return out;
}

}  // namespace mra
