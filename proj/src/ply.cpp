// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/ply.h>

#include <mvg/error.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "PLY I/O assumes a little-endian host");

namespace mvg {

namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct Property {
    std::string name;
    ScalarType type;
    std::size_t offset = 0;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
    std::size_t stride = 0;
};

std::size_t type_size(ScalarType t) {
    switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
    }
    return 0;
}

bool parse_type(const std::string &s, ScalarType &out) {
    static const std::map<std::string, ScalarType> kTypes = {
        {"char", ScalarType::Int8},     {"int8", ScalarType::Int8},
        {"uchar", ScalarType::UInt8},   {"uint8", ScalarType::UInt8},
        {"short", ScalarType::Int16},   {"int16", ScalarType::Int16},
        {"ushort", ScalarType::UInt16}, {"uint16", ScalarType::UInt16},
        {"int", ScalarType::Int32},     {"int32", ScalarType::Int32},
        {"uint", ScalarType::UInt32},   {"uint32", ScalarType::UInt32},
        {"float", ScalarType::Float32}, {"float32", ScalarType::Float32},
        {"double", ScalarType::Float64}, {"float64", ScalarType::Float64},
    };
    auto it = kTypes.find(s);
    if (it == kTypes.end()) {
        return false;
    }
    out = it->second;
    return true;
}

double read_scalar(const unsigned char *p, ScalarType t) {
    switch (t) {
    case ScalarType::Int8: return static_cast<double>(*reinterpret_cast<const std::int8_t *>(p));
    case ScalarType::UInt8: return static_cast<double>(*p);
    case ScalarType::Int16: {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    case ScalarType::UInt16: {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    case ScalarType::Int32: {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case ScalarType::UInt32: {
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case ScalarType::Float32: {
        float v;
        std::memcpy(&v, p, 4);
        return v;
    }
    case ScalarType::Float64: {
        double v;
        std::memcpy(&v, p, 8);
        return v;
    }
    }
    return 0.0;
}

std::vector<Element> parse_header(std::istream &in, const std::string &where) {
    auto fail = [&](const std::string &msg) -> void { throw ParseError(where + ": " + msg); };
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        fail("missing 'ply' magic");
    }
    std::vector<Element> elements;
    bool saw_format = false;
    bool saw_end = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian") {
                fail("unsupported format '" + fmt + "' (only binary_little_endian)");
            }
            saw_format = true;
        } else if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
            continue;
        } else if (keyword == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0) {
                fail("malformed element line '" + line + "'");
            }
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (elements.empty()) {
                fail("property before any element");
            }
            std::string type_name, name;
            ls >> type_name;
            if (type_name == "list") {
                fail("list property in element '" + elements.back().name + "' is not supported");
            }
            ls >> name;
            Property prop;
            prop.name = name;
            if (name.empty() || !parse_type(type_name, prop.type)) {
                fail("malformed property line '" + line + "'");
            }
            Element &e = elements.back();
            prop.offset = e.stride;
            e.stride += type_size(prop.type);
            e.properties.push_back(prop);
        } else if (keyword == "end_header") {
            saw_end = true;
            break;
        } else {
            fail("unexpected header line '" + line + "'");
        }
    }
    if (!saw_end) {
        fail("header is not terminated by end_header");
    }
    if (!saw_format) {
        fail("missing format line");
    }
    return elements;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

GaussianSplat load_ply(const std::filesystem::path &path) {
    const std::string where = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError(where + ": cannot open file");
    }
    const std::vector<Element> elements = parse_header(in, where);

    const Element *vertex = nullptr;
    std::size_t skip_bytes = 0;
    for (const auto &e : elements) {
        if (e.name == "vertex") {
            vertex = &e;
            break;
        }
        skip_bytes += e.count * e.stride;
    }
    if (vertex == nullptr) {
        throw ParseError(where + ": missing element 'vertex'");
    }
    in.seekg(static_cast<std::streamoff>(skip_bytes), std::ios::cur);

    static const std::array<const char *, 14> kRequired = {
        "x",       "y",       "z",       "f_dc_0",  "f_dc_1",  "f_dc_2",
        "opacity", "scale_0", "scale_1", "scale_2", "rot_0",   "rot_1",
        "rot_2",   "rot_3"};
    std::array<const Property *, 14> props{};
    for (std::size_t i = 0; i < props.size(); ++i) {
        for (const auto &p : vertex->properties) {
            if (p.name == kRequired[i]) {
                props[i] = &p;
            }
        }
        if (props[i] == nullptr) {
            throw ParseError(where + ": element 'vertex' is missing property '" +
                             std::string(kRequired[i]) + "'");
        }
    }

    GaussianSplat splat;
    splat.reserve(vertex->count);
    std::vector<unsigned char> record(vertex->stride);
    for (std::size_t k = 0; k < vertex->count; ++k) {
        in.read(reinterpret_cast<char *>(record.data()),
                static_cast<std::streamsize>(record.size()));
        if (in.gcount() != static_cast<std::streamsize>(record.size())) {
            throw ParseError(where + ": truncated data: element 'vertex' declares " +
                             std::to_string(vertex->count) + " records but only " +
                             std::to_string(k) + " are present");
        }
        std::array<double, 14> v;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = read_scalar(record.data() + props[i]->offset, props[i]->type);
            if (!std::isfinite(v[i])) {
                throw ParseError(where + ": non-finite value in property '" +
                                 std::string(kRequired[i]) + "' of vertex " + std::to_string(k));
            }
        }
        Vec4 q(v[10], v[11], v[12], v[13]);
        if (q.norm() == 0.0) {
            throw ParseError(where + ": zero rotation quaternion at vertex " + std::to_string(k));
        }
        const Vec3 color = (Vec3(v[3], v[4], v[5]) * kShC0 + Vec3::Constant(0.5))
                               .cwiseMax(0.0)
                               .cwiseMin(1.0);
        const Vec3 scale(std::exp(v[7]), std::exp(v[8]), std::exp(v[9]));
        if (!scale.allFinite() || (scale.array() <= 0.0).any()) {
            throw ParseError(where + ": scale out of range at vertex " + std::to_string(k));
        }
        // Clamp away from exactly 0 / 1, which float32 logits can reach.
        const double opacity = std::clamp(sigmoid(v[6]), 1e-12, 1.0 - 1e-12);
        splat.push_back(Vec3(v[0], v[1], v[2]), scale, q.normalized(), opacity, color);
    }
    return splat;
}

void save_ply(const GaussianSplat &splat, const std::filesystem::path &path) {
    splat.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(path.string() + ": cannot open for writing");
    }
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << splat.size() << "\n";
    for (const char *name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                             "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                             "rot_2", "rot_3"}) {
        out << "property float " << name << "\n";
    }
    out << "end_header\n";
    std::array<float, 17> row;
    for (std::size_t k = 0; k < splat.size(); ++k) {
        const Vec3 &c = splat.centers[k];
        const Vec3 dc = (splat.colors[k] - Vec3::Constant(0.5)) / kShC0;
        const double o = splat.opacities[k];
        const Vec3 &s = splat.scales[k];
        const Vec4 &q = splat.rotations[k];
        row = {static_cast<float>(c.x()), static_cast<float>(c.y()), static_cast<float>(c.z()),
               0.0f, 0.0f, 0.0f,
               static_cast<float>(dc.x()), static_cast<float>(dc.y()), static_cast<float>(dc.z()),
               static_cast<float>(std::log(o / (1.0 - o))),
               static_cast<float>(std::log(s.x())), static_cast<float>(std::log(s.y())),
               static_cast<float>(std::log(s.z())),
               static_cast<float>(q[0]), static_cast<float>(q[1]), static_cast<float>(q[2]),
               static_cast<float>(q[3])};
        out.write(reinterpret_cast<const char *>(row.data()), sizeof(row));
    }
    if (!out) {
        throw Error(path.string() + ": write failed");
    }
}

} // namespace mvg
