#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "picepr/cost.hpp"
#include "picepr/structured.hpp"

namespace picepr {

using ordered_json = nlohmann::ordered_json;

/// Append-only JSONL store for per-sample stage outputs, one file per stage
/// under a run directory. Existing records are loaded up front so an
/// interrupted run can resume without repeating completed samples; appends
/// are whole-line writes under a lock.
class StageStore {
public:
    explicit StageStore(std::filesystem::path dir);

    bool has(const std::string& stage, const std::string& sample_id) const;
    const ordered_json* find(const std::string& stage, const std::string& sample_id) const;
    void append(const std::string& stage, const std::string& sample_id, ordered_json payload);
    std::size_t count(const std::string& stage) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path stage_path(const std::string& stage) const;
    void load_stage(const std::string& stage);

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::map<std::string, ordered_json>> records_;
    std::map<std::string, bool> loaded_;
};

/// Immutable once written: a completed run directory holds exactly one
/// manifest. Incomplete runs have none, which is what marks them resumable.
struct RunManifest {
    std::string run_id;
    std::string command;
    std::string variant;
    ordered_json config;
    std::uint64_t seed = 0;
    ErrorLedger ledger;
    std::map<std::string, TokenUsage> usage_per_backend;
    std::string started_at;
    std::string finished_at;

    ordered_json to_json() const;
    static RunManifest from_json(const ordered_json& j);

    /// Writes via a temp file + rename; refuses to overwrite an existing
    /// manifest.
    void write(const std::filesystem::path& run_dir) const;
    static std::optional<RunManifest> read(const std::filesystem::path& run_dir);
};

std::string iso8601_now();

}  // namespace picepr
