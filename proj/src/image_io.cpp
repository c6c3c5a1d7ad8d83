#include "sgp/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "sgp/errors.hpp"

namespace sgp {
namespace {

// Next whitespace-separated token; netpbm headers may embed '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

int parse_dim(const std::string& tok, const std::string& path, const char* what) {
    int v = 0;
    for (char c : tok) {
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw DataFormatError(path + ": bad " + what + " '" + tok + "'");
        v = v * 10 + (c - '0');
        if (v > 1 << 20) throw DataFormatError(path + ": " + what + " out of range");
    }
    if (tok.empty() || v < 1) throw DataFormatError(path + ": bad " + what);
    return v;
}

} // namespace

void write_netpbm(const std::string& path, const ImageTensor& img) {
    const int ch = img.channels();
    if (ch != 1 && ch != 3)
        throw std::invalid_argument("write_netpbm: need 1 or 3 channels, got " +
                                    std::to_string(ch));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError(path + ": cannot open for writing");
    out << (ch == 3 ? "P6" : "P5") << "\n"
        << img.width() << " " << img.height() << "\n255\n";

    std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * ch);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < ch; ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x) * ch + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataFormatError(path + ": write failed");
}

ImageTensor read_netpbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError(path + ": cannot open");

    const std::string magic = next_token(in);
    int ch;
    if (magic == "P6")
        ch = 3;
    else if (magic == "P5")
        ch = 1;
    else
        throw DataFormatError(path + ": expected P5 or P6, got '" + magic + "'");

    const int w = parse_dim(next_token(in), path, "width");
    const int h = parse_dim(next_token(in), path, "height");
    const std::string maxval = next_token(in);
    if (maxval != "255") throw DataFormatError(path + ": unsupported maxval '" + maxval + "'");
    // The header ends with exactly one whitespace byte, already consumed by
    // the tokenizer.

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * ch);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataFormatError(path + ": truncated pixel data");

    ImageTensor img(ch, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                img.at(c, y, x) =
                    static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * ch + c]) / 255.0f;
    return img;
}

} // namespace sgp
