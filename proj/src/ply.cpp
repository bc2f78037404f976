#include "extend3d/ply.hpp"

#include <algorithm>
#include <charconv>

#include "extend3d/bytes.hpp"

namespace extend3d {

namespace {

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
};

class LineCursor {
public:
    explicit LineCursor(std::string_view text) : text_(text) {}

    bool next(std::string_view& line) {
        if (pos_ >= text_.size()) return false;
        line_start_ = pos_;
        const auto end = text_.find('\n', pos_);
        const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
        line = text_.substr(pos_, stop - pos_);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos_ = stop + 1;
        return true;
    }
    std::size_t line_start() const noexcept { return line_start_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_start_ = 0;
};

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double to_double(std::string_view tok, std::size_t offset) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError("ply: bad number", offset);
    return v;
}

void append_number(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace

PointCloud parse_ply(std::string_view text) {
    LineCursor cur(text);
    std::string_view line;
    if (!cur.next(line) || line != "ply") throw ParseError("ply: missing 'ply' magic line", 0);
    if (!cur.next(line) || split(line) != std::vector<std::string_view>{"format", "ascii", "1.0"}) {
        throw ParseError("ply: only 'format ascii 1.0' is supported", cur.line_start());
    }
    std::vector<Element> elements;
    bool header_done = false;
    while (cur.next(line)) {
        const auto tok = split(line);
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") {
            header_done = true;
            break;
        }
        if (tok[0] == "element" && tok.size() == 3) {
            Element e;
            e.name = std::string(tok[1]);
            const double n = to_double(tok[2], cur.line_start());
            if (n < 0 || n != static_cast<double>(static_cast<std::size_t>(n))) {
                throw ParseError("ply: bad element count", cur.line_start());
            }
            e.count = static_cast<std::size_t>(n);
            elements.push_back(std::move(e));
        } else if (tok[0] == "property" && tok.size() >= 3) {
            if (elements.empty()) throw ParseError("ply: property before element", cur.line_start());
            elements.back().properties.emplace_back(tok.back());
        } else {
            throw ParseError("ply: unrecognized header line", cur.line_start());
        }
    }
    if (!header_done) throw ParseError("ply: missing end_header", text.size());

    PointCloud cloud;
    for (const auto& e : elements) {
        if (e.name != "vertex") {
            for (std::size_t k = 0; k < e.count; ++k) {
                if (!cur.next(line)) throw ParseError("ply: truncated element '" + e.name + "'", text.size());
            }
            continue;
        }
        auto index_of = [&](std::string_view name) -> int {
            for (std::size_t i = 0; i < e.properties.size(); ++i)
                if (e.properties[i] == name) return static_cast<int>(i);
            return -1;
        };
        const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
        const int ir = index_of("red"), ig = index_of("green"), ib = index_of("blue");
        if (ix < 0 || iy < 0 || iz < 0) throw ParseError("ply: vertex element lacks x/y/z", 0);
        const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
        cloud.points.reserve(std::min(e.count, text.size()));
        for (std::size_t k = 0; k < e.count; ++k) {
            if (!cur.next(line)) throw ParseError("ply: truncated vertex list", text.size());
            const auto tok = split(line);
            if (tok.size() != e.properties.size()) throw ParseError("ply: vertex has wrong field count", cur.line_start());
            const std::size_t at = cur.line_start();
            cloud.points.push_back({to_double(tok[static_cast<std::size_t>(ix)], at),
                                    to_double(tok[static_cast<std::size_t>(iy)], at),
                                    to_double(tok[static_cast<std::size_t>(iz)], at)});
            if (has_color) {
                std::array<std::uint8_t, 3> rgb{};
                const int idx[3] = {ir, ig, ib};
                for (int c = 0; c < 3; ++c) {
                    const double v = to_double(tok[static_cast<std::size_t>(idx[c])], at);
                    if (v < 0 || v > 255) throw ParseError("ply: colour out of range", at);
                    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(v);
                }
                cloud.colors.push_back(rgb);
            }
        }
    }
    return cloud;
}

PointCloud read_ply(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return parse_ply({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string format_ply(const PointCloud& cloud) {
    const bool color = !cloud.colors.empty();
    if (color && cloud.colors.size() != cloud.points.size()) throw DimensionError("ply: one colour per point required");
    std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.points.size()) +
                      "\nproperty float x\nproperty float y\nproperty float z\n";
    if (color) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "end_header\n";
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        append_number(out, p.x);
        out += ' ';
        append_number(out, p.y);
        out += ' ';
        append_number(out, p.z);
        if (color) {
            for (auto c : cloud.colors[i]) {
                out += ' ';
                out += std::to_string(c);
            }
        }
        out += '\n';
    }
    return out;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
    const std::string text = format_ply(cloud);
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace extend3d
