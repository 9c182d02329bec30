#include "otgeo/report.hpp"

#include "otgeo/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

namespace otgeo {

namespace {
std::mutex g_writer;
}

std::string software_version() { return "0.1.0"; }

std::size_t peak_memory_bytes()
{
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            std::istringstream ss(line.substr(6));
            std::size_t kb = 0;
            ss >> kb;
            return kb * 1024;
        }
    }
    return 0;
}

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double RunReport::metric(const std::string& name) const
{
    for (const auto& [k, v] : metrics)
        if (k == name) return v;
    fail(ErrorKind::InvalidInput, "report has no metric '" + name + "'");
}

nlohmann::json RunReport::summary() const
{
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["peak_memory_bytes"] = peak_memory;
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : timings) t[k] = v;
    j["timings_seconds"] = t;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : metrics) m[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    j["metrics"] = m;
    j["epochs"] = epochs.size();
    if (!extra.empty()) j["details"] = extra;
    return j;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows)
{
    std::lock_guard lock(g_writer);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::lock_guard lock(g_writer);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void write_run_report(const std::filesystem::path& dir, const RunReport& report)
{
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : report.epochs)
        rows.push_back({std::to_string(e.epoch), format_double(e.train_loss), format_double(e.train_rel_l2),
                        format_double(e.val_rel_l2), format_double(e.val_mse), format_double(e.seconds),
                        report.config_hash});
    write_csv(dir / "report.csv",
              {"epoch", "train_loss", "train_rel_l2", "val_rel_l2", "val_mse", "seconds", "config_hash"}, rows);
    write_json(dir / "summary.json", report.summary());
}

}  // namespace otgeo
