#pragma once

#include <map>
#include <string>
#include <vector>

namespace availprop {

// Minimal RFC-4180-style CSV: quoted fields with doubled quotes, no
// embedded newlines on read.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // column index by name, -1 when absent
    int column(const std::string& name) const;
    bool has_column(const std::string& name) const { return column(name) >= 0; }
};

CsvTable read_csv(const std::string& path);

std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Fixed-format float for deterministic output (shortest %.10g form).
std::string format_double(double x);

} // namespace availprop
