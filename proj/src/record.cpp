#include "nashpar/record.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nashpar/errors.hpp"

namespace nashpar {

void Table::row(std::vector<double> values) {
    if (values.size() != columns.size())
        throw InvariantError("table '" + name + "' row width disagrees with its header");
    rows.push_back(std::move(values));
}

std::string format_sci(double v) {
    std::ostringstream out;
    out << std::scientific << std::setprecision(16) << v;
    return out.str();
}

RunRecord::RunRecord(std::string command,
                     std::vector<std::pair<std::string, std::string>> config_echo)
    : command_(std::move(command)), echo_(std::move(config_echo)) {}

void RunRecord::note(const std::string& key, const std::string& value) {
    notes_.emplace_back(key, value);
}

void RunRecord::metric(const std::string& key, double value) {
    metrics_.emplace_back(key, value);
}

void RunRecord::check(const std::string& name, bool pass) {
    checks_.emplace_back(name, pass);
}

Table& RunRecord::add_table(std::string name, std::vector<std::string> columns) {
    for (const auto& t : tables_)
        if (t.name == name) throw InvariantError("duplicate table name '" + name + "'");
    Table t;
    t.name = std::move(name);
    t.columns = std::move(columns);
    tables_.push_back(std::move(t));
    return tables_.back();
}

bool RunRecord::all_passed() const {
    for (const auto& [name, ok] : checks_)
        if (!ok) return false;
    return true;
}

std::string RunRecord::record_text(double wall_seconds) const {
    std::ostringstream out;
    out << "command = " << command_ << "\n";
    out << "version = " << version_string << "\n";
    out << "status = " << (all_passed() ? "pass" : "fail") << "\n";
    out << "wall_seconds = " << format_sci(wall_seconds) << "\n";
    out << "config_begin\n";
    for (const auto& [k, v] : echo_) out << k << " = " << v << "\n";
    out << "config_end\n";
    for (const auto& [k, v] : notes_) out << "note " << k << " = " << v << "\n";
    for (const auto& [k, v] : metrics_) out << "metric " << k << " = " << format_sci(v) << "\n";
    for (const auto& [k, ok] : checks_)
        out << "check " << k << " = " << (ok ? "pass" : "fail") << "\n";
    for (const auto& t : tables_)
        out << "table " << t.name << ".csv rows = " << t.rows.size() << "\n";
    return out.str();
}

void RunRecord::write(const std::string& out_dir, double wall_seconds) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ValidationError("cannot create output directory '" + out_dir + "'");

    {
        std::ofstream rec(fs::path(out_dir) / "run.record", std::ios::trunc);
        if (!rec) throw ValidationError("cannot write run.record in '" + out_dir + "'");
        rec << record_text(wall_seconds);
    }
    for (const auto& t : tables_) {
        std::ofstream csv(fs::path(out_dir) / (t.name + ".csv"), std::ios::trunc);
        if (!csv) throw ValidationError("cannot write table '" + t.name + "' in '" + out_dir + "'");
        for (std::size_t c = 0; c < t.columns.size(); ++c)
            csv << (c ? "," : "") << t.columns[c];
        csv << "\n";
        for (const auto& r : t.rows) {
            for (std::size_t c = 0; c < r.size(); ++c) csv << (c ? "," : "") << format_sci(r[c]);
            csv << "\n";
        }
    }
}

std::string extract_config_echo(const std::string& record_text) {
    std::istringstream in(record_text);
    std::ostringstream out;
    std::string line;
    bool inside = false, seen = false;
    while (std::getline(in, line)) {
        if (line == "config_begin") {
            inside = true;
            seen = true;
            continue;
        }
        if (line == "config_end") {
            inside = false;
            continue;
        }
        if (inside) out << line << "\n";
    }
    if (!seen) throw ValidationError("record text has no config block");
    return out.str();
}

} // namespace nashpar
