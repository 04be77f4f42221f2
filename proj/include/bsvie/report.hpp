#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bsvie/errors.hpp"

namespace bsvie {

/// Shortest round-trip decimal form of a double (to_chars).
std::string format_number(double v);

/// RFC-4180 CSV writer: fields containing commas, quotes or newlines are
/// quoted, embedded quotes doubled. Numbers are written in shortest
/// round-trip form so identical runs produce identical bytes.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();

    CsvWriter& field(const std::string& text);
    CsvWriter& field(double v);
    CsvWriter& empty_field();
    void end_row();

private:
    struct Impl;
    Impl* impl_;
};

/// Serializes with 2-space indentation and nlohmann's lexicographic key
/// order, newline-terminated; stable across runs.
void write_json_file(const std::string& path, const nlohmann::json& value);

/// Local wall-clock timestamp; the one field reruns are allowed to differ in.
std::string timestamp_now();

void ensure_directory(const std::string& path);

std::string join_path(const std::string& dir, const std::string& name);

} // namespace bsvie
