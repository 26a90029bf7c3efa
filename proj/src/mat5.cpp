// Minimal MATLAB level-5 (.mat) reader, covering the uncompressed numeric
// arrays the SVHN cropped-digit files use: X as 32x32x3xN uint8 and y as
// Nx1 integer labels 1..10, where 10 encodes the digit 0.

#include <cstring>

#include "dtn/data.hpp"

namespace dtn::data {
namespace {

enum MiType : uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
};

struct Element {
    uint32_t type = 0;
    const uint8_t* data = nullptr;
    size_t bytes = 0;
    size_t total = 0;  // bytes consumed including header and padding
};

Element read_element(const uint8_t* p, size_t avail) {
    if (avail < 8) throw CorruptionError("mat5: truncated element");
    Element e;
    uint32_t tag;
    std::memcpy(&tag, p, 4);
    if (tag & 0xffff0000u) {  // small data element: 16-bit type + 16-bit size
        e.type = tag & 0xffffu;
        e.bytes = tag >> 16;
        if (e.bytes > 4) throw CorruptionError("mat5: bad small element");
        e.data = p + 4;
        e.total = 8;
    } else {
        e.type = tag;
        uint32_t nb;
        std::memcpy(&nb, p + 4, 4);
        e.bytes = nb;
        e.data = p + 8;
        const size_t padded = (e.bytes + 7) & ~size_t(7);
        if (8 + padded > avail) throw CorruptionError("mat5: element overruns file");
        e.total = 8 + padded;
    }
    return e;
}

size_t mi_size(uint32_t type) {
    switch (type) {
        case miINT8:
        case miUINT8: return 1;
        case miINT16:
        case miUINT16: return 2;
        case miINT32:
        case miUINT32:
        case miSINGLE: return 4;
        case miDOUBLE:
        case miINT64:
        case miUINT64: return 8;
        default: throw CorruptionError("mat5: unsupported data type");
    }
}

double read_as_double(const uint8_t* p, uint32_t type, size_t i) {
    switch (type) {
        case miINT8: return static_cast<int8_t>(p[i]);
        case miUINT8: return p[i];
        case miINT16: { int16_t v; std::memcpy(&v, p + 2 * i, 2); return v; }
        case miUINT16: { uint16_t v; std::memcpy(&v, p + 2 * i, 2); return v; }
        case miINT32: { int32_t v; std::memcpy(&v, p + 4 * i, 4); return v; }
        case miUINT32: { uint32_t v; std::memcpy(&v, p + 4 * i, 4); return v; }
        case miSINGLE: { float v; std::memcpy(&v, p + 4 * i, 4); return v; }
        case miDOUBLE: { double v; std::memcpy(&v, p + 8 * i, 8); return v; }
        default: throw CorruptionError("mat5: unsupported data type");
    }
}

struct MatVar {
    std::string name;
    std::vector<int> dims;
    uint32_t data_type = 0;
    const uint8_t* data = nullptr;
    size_t count = 0;
};

MatVar parse_matrix(const Element& outer) {
    const uint8_t* p = outer.data;
    size_t left = outer.bytes;
    auto take = [&]() {
        Element e = read_element(p, left);
        p += e.total;
        left -= e.total;
        return e;
    };
    Element flags = take();      // array flags (class byte unused here)
    (void)flags;
    Element dims_el = take();
    Element name_el = take();
    Element data_el = take();
    MatVar v;
    const size_t ndims = dims_el.bytes / 4;
    for (size_t i = 0; i < ndims; ++i) {
        int32_t d;
        std::memcpy(&d, dims_el.data + 4 * i, 4);
        v.dims.push_back(d);
    }
    v.name.assign(reinterpret_cast<const char*>(name_el.data), name_el.bytes);
    v.data_type = data_el.type;
    v.data = data_el.data;
    v.count = data_el.bytes / mi_size(data_el.type);
    size_t want = 1;
    for (int d : v.dims) want *= static_cast<size_t>(d);
    if (v.count < want) throw CorruptionError("mat5: data shorter than dimensions");
    return v;
}

}  // namespace

DatasetSplit decode_svhn_mat(const std::vector<uint8_t>& bytes, const std::string& name,
                             Domain domain) {
    if (bytes.size() < 128) throw CorruptionError("mat5: file too short");
    uint16_t version, endian;
    std::memcpy(&version, bytes.data() + 124, 2);
    std::memcpy(&endian, bytes.data() + 126, 2);
    if (endian != 0x4d49)  // "IM" read little-endian
        throw CorruptionError("mat5: not a little-endian level-5 file");

    MatVar x, y;
    size_t off = 128;
    while (off < bytes.size()) {
        Element e = read_element(bytes.data() + off, bytes.size() - off);
        if (e.type == miCOMPRESSED)
            throw CorruptionError("mat5: compressed variables are not supported");
        if (e.type == miMATRIX) {
            MatVar v = parse_matrix(e);
            if (v.name == "X") x = v;
            else if (v.name == "y") y = v;
        }
        off += e.total;
    }
    if (x.data == nullptr || y.data == nullptr)
        throw CorruptionError("mat5: missing variable X or y");
    if (x.dims.size() != 4 || x.dims[0] != 32 || x.dims[1] != 32 || x.dims[2] != 3)
        throw CorruptionError("mat5: X must be 32x32x3xN");
    if (x.data_type != miUINT8) throw CorruptionError("mat5: X must be uint8");
    const size_t n = static_cast<size_t>(x.dims[3]);
    size_t ycount = 1;
    for (int d : y.dims) ycount *= static_cast<size_t>(d);
    if (ycount != n) throw CorruptionError("mat5: X/y count mismatch");

    DatasetSplit split(name, {3, 32, 32}, domain);
    split.reserve(n);
    std::vector<uint8_t> px(3 * 32 * 32);
    for (size_t s = 0; s < n; ++s) {
        // Column-major (i, j, c, s) -> channel-major c*1024 + i*32 + j.
        const uint8_t* base = x.data + s * 3072;
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 32; ++j)
                for (int i = 0; i < 32; ++i)
                    px[c * 1024 + i * 32 + j] = base[i + 32 * j + 1024 * c];
        int label = static_cast<int>(read_as_double(y.data, y.data_type, s));
        if (label == 10) label = 0;  // SVHN encodes digit 0 as class 10
        if (label < 0 || label > 9) throw CorruptionError("mat5: label out of range");
        split.push_back(px.data(), label);
    }
    return split;
}

}  // namespace dtn::data
