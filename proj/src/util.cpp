#include "statviz/util.hpp"

#include "statviz/error.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace statviz::util {

namespace fs = std::filesystem;

std::string csv_escape(std::string_view value) {
    bool needs_quotes = value.empty() || value.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) {
        return std::string(value);
    }
    std::string out;
    out.reserve(value.size() + 2);
    out.push_back('"');
    for (char c : value) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string csv_format_row(std::span<const Field> row) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) {
            line.push_back(',');
        }
        if (row[i]) {
            line += csv_escape(*row[i]);
        }
    }
    return line;
}

std::vector<CsvRow> csv_parse(std::string_view text) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    bool quoted = false;      // current field was quoted
    bool in_quotes = false;   // inside a quoted section
    bool field_started = false;
    bool line_has_content = false;

    auto end_field = [&] {
        if (quoted || !field.empty()) {
            row.emplace_back(std::move(field));
        } else {
            row.emplace_back(std::nullopt);
        }
        field.clear();
        quoted = false;
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        line_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field_started) {
                throw ParseError("stray quote in CSV field", std::string(text.substr(i, 32)));
            }
            in_quotes = true;
            quoted = true;
            field_started = true;
            line_has_content = true;
            break;
        case ',':
            end_field();
            line_has_content = true;
            break;
        case '\r':
            break;
        case '\n':
            if (line_has_content || !row.empty()) {
                end_row();
            }
            break;
        default:
            if (quoted) {
                throw ParseError("text after closing quote", std::string(text.substr(i, 32)));
            }
            field.push_back(c);
            field_started = true;
            line_has_content = true;
        }
    }
    if (in_quotes) {
        throw ParseError("unterminated quoted CSV field", field.substr(0, 32));
    }
    if (line_has_content || !row.empty()) {
        end_row();
    }
    return rows;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    auto dir = path.parent_path();
    if (!dir.empty() && !fs::is_directory(dir)) {
        throw IoError("directory does not exist: " + dir.string());
    }
    thread_local std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = path;
    tmp += fmt::format(".tmp{:016x}", rng());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

void append_line(const fs::path& path, std::string_view line) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        throw IoError("cannot append to " + path.string());
    }
    out << line << '\n';
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string base64_encode(std::string_view data) {
    std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(data.data()),
                            static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

double round_half_up(double value, int digits) {
    double scale = std::pow(10.0, digits);
    double scaled = value * scale;
    return std::floor(scaled + 0.5 + 1e-9) / scale;
}

std::string format_fixed(double value, int digits) {
    return fmt::format("{:.{}f}", round_half_up(value, digits), digits);
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

std::string slugify(std::string_view s) {
    std::string out;
    for (char c : to_lower(s)) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        if (ok) {
            out.push_back(c);
        } else if (out.empty() || out.back() != '-') {
            out.push_back('-');
        }
    }
    while (!out.empty() && out.back() == '-') {
        out.pop_back();
    }
    while (!out.empty() && (out.front() == '-' || out.front() == '.')) {
        out.erase(out.begin());
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) {
                lines.emplace_back(text.substr(start));
            }
            break;
        }
        std::string line(text.substr(start, nl - start));
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    return lines;
}

} // namespace statviz::util
