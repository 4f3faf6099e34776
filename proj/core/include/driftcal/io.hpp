#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace driftcal {

// Shortest text form that parses back to the identical double: %.17g with
// trailing-zero trimming. Used for every numeric field we serialize so CSV
// and JSON renderings of the same value are byte-identical.
std::string format_double(double v);

// Minimal streaming JSON writer. Key order is emission order, which keeps
// artifact files byte-stable across runs.
class JsonWriter {
public:
    std::string take() { return std::move(out_); }

    void begin_object();
    void end_object();
    void begin_array();
    void end_array();
    void key(const std::string& k);
    void value(const std::string& v);
    void value(const char* v);
    void value(double v);
    void value(std::int64_t v);
    void value(int v) { value(static_cast<std::int64_t>(v)); }
    void value(std::size_t v) { value(static_cast<std::int64_t>(v)); }
    void value(bool v);
    void null();

    void kv(const std::string& k, const std::string& v) { key(k); value(v); }
    void kv(const std::string& k, const char* v) { key(k); value(v); }
    void kv(const std::string& k, double v) { key(k); value(v); }
    void kv(const std::string& k, std::int64_t v) { key(k); value(v); }
    void kv(const std::string& k, int v) { key(k); value(v); }
    void kv(const std::string& k, std::size_t v) { key(k); value(v); }
    void kv(const std::string& k, bool v) { key(k); value(v); }

private:
    void comma();
    void raw(const std::string& s);

    std::string out_;
    std::vector<bool> first_;  // per nesting level
    bool pending_key_ = false;
};

std::string json_escape(const std::string& s);

// One CSV field, quoting only when needed.
std::string csv_field(const std::string& s);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace driftcal
