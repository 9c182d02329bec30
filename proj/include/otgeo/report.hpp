#pragma once

#include "otgeo/training.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace otgeo {

std::string software_version();

/// Resident-set high-water mark in bytes (VmHWM), 0 when unavailable.
std::size_t peak_memory_bytes();

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

struct RunReport {
    std::string command;
    std::string config_hash;
    std::string version = software_version();
    std::vector<EpochRow> epochs;
    std::vector<std::pair<std::string, double>> timings;  // phase -> seconds
    std::vector<std::pair<std::string, double>> metrics;
    nlohmann::json extra = nlohmann::json::object();
    std::size_t peak_memory = 0;

    void add_timing(const std::string& phase, double seconds) { timings.emplace_back(phase, seconds); }
    void add_metric(const std::string& name, double value) { metrics.emplace_back(name, value); }
    double metric(const std::string& name) const;
    nlohmann::json summary() const;
};

/// Rows are written in full under one process-wide lock.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// report.csv (one row per epoch) and summary.json in `dir`.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

/// Shortest round-tripping decimal form.
std::string format_double(double v);

}  // namespace otgeo
