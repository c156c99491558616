#include "picepr/artifacts.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "picepr/util.hpp"

namespace picepr {

StageStore::StageStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path StageStore::stage_path(const std::string& stage) const {
    return dir_ / (stage + ".jsonl");
}

void StageStore::load_stage(const std::string& stage) {
    if (loaded_[stage]) return;
    loaded_[stage] = true;
    std::ifstream in(stage_path(stage), std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("sample_id")) continue;
        std::string id = j.at("sample_id").get<std::string>();
        records_[stage][id] = std::move(j);
    }
}

bool StageStore::has(const std::string& stage, const std::string& sample_id) const {
    return find(stage, sample_id) != nullptr;
}

const ordered_json* StageStore::find(const std::string& stage,
                                     const std::string& sample_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const_cast<StageStore*>(this)->load_stage(stage);
    auto sit = records_.find(stage);
    if (sit == records_.end()) return nullptr;
    auto it = sit->second.find(sample_id);
    return it == sit->second.end() ? nullptr : &it->second;
}

void StageStore::append(const std::string& stage, const std::string& sample_id,
                        ordered_json payload) {
    payload["sample_id"] = sample_id;
    std::lock_guard<std::mutex> lock(mutex_);
    load_stage(stage);
    auto& stage_map = records_[stage];
    if (stage_map.count(sample_id)) return;  // already persisted
    std::ofstream out(stage_path(stage), std::ios::binary | std::ios::app);
    if (!out) throw Error("IoError", "cannot append to " + stage_path(stage).string());
    out << payload.dump() << "\n";
    out.flush();
    stage_map[sample_id] = std::move(payload);
}

std::size_t StageStore::count(const std::string& stage) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const_cast<StageStore*>(this)->load_stage(stage);
    auto it = records_.find(stage);
    return it == records_.end() ? 0 : it->second.size();
}

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json RunManifest::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["command"] = command;
    j["variant"] = variant;
    j["config"] = config;
    j["seed"] = seed;
    j["ledger"] = {{"total_rows", ledger.total_rows}, {"error_rows", ledger.error_rows}};
    ordered_json usage;
    for (const auto& [backend, u] : usage_per_backend) {
        usage[backend] = {{"input_tokens", u.input_tokens}, {"output_tokens", u.output_tokens}};
    }
    j["usage"] = std::move(usage);
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    return j;
}

RunManifest RunManifest::from_json(const ordered_json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.variant = j.value("variant", "");
    m.config = j.value("config", ordered_json::object());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ledger.total_rows = j.at("ledger").at("total_rows").get<std::size_t>();
    m.ledger.error_rows = j.at("ledger").at("error_rows").get<std::size_t>();
    if (j.contains("usage")) {
        for (auto it = j.at("usage").begin(); it != j.at("usage").end(); ++it) {
            TokenUsage u;
            u.input_tokens = it.value().at("input_tokens").get<std::uint64_t>();
            u.output_tokens = it.value().at("output_tokens").get<std::uint64_t>();
            m.usage_per_backend[it.key()] = u;
        }
    }
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
}

void RunManifest::write(const std::filesystem::path& run_dir) const {
    auto path = run_dir / "manifest.json";
    if (std::filesystem::exists(path)) {
        throw Error("ManifestExists", "completed manifest already present: " + path.string());
    }
    auto tmp = run_dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("IoError", "cannot write manifest: " + tmp.string());
        out << to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::optional<RunManifest> RunManifest::read(const std::filesystem::path& run_dir) {
    auto path = run_dir / "manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return RunManifest::from_json(j);
}

}  // namespace picepr
