#include "availprop/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace availprop {

int CsvTable::column(const std::string& name) const
{
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return int(i);
    return -1;
}

namespace {

std::vector<std::string> parse_line(const std::string& line, const std::string& path, size_t lineno)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace

CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    CsvTable table;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            table.header = parse_line(line, path, lineno);
            continue;
        }
        if (line.empty()) continue;
        table.rows.push_back(parse_line(line, path, lineno));
    }
    if (table.header.empty())
        throw std::runtime_error(path + ": empty file");
    return table;
}

std::string csv_escape(const std::string& field)
{
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::string csv_join(const std::vector<std::string>& fields)
{
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows)
{
    std::ofstream out(path, std::ios::binary); // binary: byte-stable newlines
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << csv_join(header) << '\n';
    for (const auto& row : rows) out << csv_join(row) << '\n';
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

std::string format_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

} // namespace availprop
