#include "bsvie/report.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

namespace bsvie {

std::string format_number(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

struct CsvWriter::Impl {
    std::ofstream out;
    bool row_started = false;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
    impl_->out.open(path, std::ios::binary);
    if (!impl_->out) {
        delete impl_;
        throw Error("cannot open '" + path + "' for writing");
    }
}

CsvWriter::~CsvWriter() { delete impl_; }

CsvWriter& CsvWriter::field(const std::string& text) {
    if (impl_->row_started) {
        impl_->out << ',';
    }
    impl_->row_started = true;
    const bool needs_quotes = text.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) {
        impl_->out << text;
        return *this;
    }
    impl_->out << '"';
    for (char c : text) {
        if (c == '"') {
            impl_->out << '"';
        }
        impl_->out << c;
    }
    impl_->out << '"';
    return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_number(v)); }

CsvWriter& CsvWriter::empty_field() {
    if (impl_->row_started) {
        impl_->out << ',';
    }
    impl_->row_started = true;
    return *this;
}

void CsvWriter::end_row() {
    impl_->out << '\n';
    impl_->row_started = false;
}

void write_json_file(const std::string& path, const nlohmann::json& value) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out << value.dump(2) << '\n';
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) {
        throw Error("cannot create output directory '" + path + "': " + ec.message());
    }
}

std::string join_path(const std::string& dir, const std::string& name) {
    if (dir.empty()) {
        return name;
    }
    return (std::filesystem::path(dir) / name).string();
}

} // namespace bsvie
