#pragma once

#include <string>
#include <utility>
#include <vector>

namespace nashpar {

inline constexpr const char* version_string = "0.1.0";

// One CSV artifact: header row plus numeric rows, written in scientific
// notation with 17 significant digits so identical runs produce identical
// bytes.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void row(std::vector<double> values);
};

std::string format_sci(double v);

// Everything one CLI run persists: the verbatim config echo, named scalar
// metrics, named pass/fail checks and the output tables. write() lays the
// directory out as out_dir/run.record plus one out_dir/<table>.csv per table.
class RunRecord {
public:
    RunRecord(std::string command, std::vector<std::pair<std::string, std::string>> config_echo);

    void note(const std::string& key, const std::string& value);
    void metric(const std::string& key, double value);
    void check(const std::string& name, bool pass);
    Table& add_table(std::string name, std::vector<std::string> columns);

    bool all_passed() const;
    const std::vector<Table>& tables() const { return tables_; }

    std::string record_text(double wall_seconds) const;
    void write(const std::string& out_dir, double wall_seconds) const;

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> echo_;
    std::vector<std::pair<std::string, std::string>> notes_;
    std::vector<std::pair<std::string, double>> metrics_;
    std::vector<std::pair<std::string, bool>> checks_;
    std::vector<Table> tables_;
};

// Pulls the verbatim config block back out of a run.record text; the block
// re-parses to the configuration the run used.
std::string extract_config_echo(const std::string& record_text);

} // namespace nashpar
