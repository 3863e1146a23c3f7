#pragma once

// ---------------------------------------------------------------------------
// Minimal CSV plumbing.  Files may start with any number of '#'-prefixed
// comment lines (the writers put a `# manifest=<id>` line there); readers
// skip them.  All numeric output uses max_digits10 so that round-trips and
// repeated runs are byte-identical.
// ---------------------------------------------------------------------------

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oddskit/errors.hpp"

namespace oddskit {

struct csv_table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<double> numeric_column(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw data_error("csv: missing column '" + name + "'");
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) {
            if (static_cast<std::size_t>(c) >= r.size())
                throw data_error("csv: short row while reading column '" + name + "'");
            try {
                out.push_back(std::stod(r[c]));
            } catch (const std::exception&) {
                throw data_error("csv: non-numeric value '" + r[c] + "' in column '" + name + "'");
            }
        }
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline csv_table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("csv: cannot open " + path);
    csv_table t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            t.header = split_csv_line(line);
            have_header = true;
            continue;
        }
        t.rows.push_back(split_csv_line(line));
    }
    if (!have_header) throw data_error("csv: no header row in " + path);
    return t;
}

class csv_writer {
  public:
    csv_writer(const std::string& path, const std::string& manifest_id,
               const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw data_error("csv: cannot write " + path);
        out_ << std::setprecision(std::numeric_limits<double>::max_digits10);
        if (!manifest_id.empty()) out_ << "# manifest=" << manifest_id << "\n";
        write_row_strings(header);
    }

    void write_row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    template <class... Ts> void write_row(const Ts&... vals) {
        bool first = true;
        ((out_ << (first ? (first = false, "") : ","), out_ << vals), ...);
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

} // namespace oddskit
