#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "era/errors.hpp"
#include "era/model.hpp"
#include "era/trainer.hpp"

namespace era {

// ============================================================================
// Checkpoint format
// ============================================================================
//
// Text manifest, one logical record per line:
//
//   ERACKPT 1
//   kind era                (or: kind teacher)
//   topology student=16,8,4 teacher=16,48,24 classes=5 stages=4 ...
//   epoch 12
//   rng 1
//   param student.block0.linear.weight 8x16 <hex>
//   buffer student.block0.bn.running_mean 8 <hex>
//   opt student.block0.linear.weight 8x16 <hex>
//   end
//
// <hex> is the tensor's doubles in order, each as its 8 bytes little-endian
// first, 16 lowercase hex digits per value, concatenated. The encoding is
// lossless, so save -> load -> save reproduces the file byte for byte.

struct SavedTensor {
    Shape shape;
    std::vector<double> values;
};

struct CheckpointData {
    std::string kind;           // "era" or "teacher"
    std::string topology_line;
    std::size_t epoch = 0;
    std::uint64_t rng_seed = 0;
    std::vector<std::pair<std::string, SavedTensor>> params;
    std::vector<std::pair<std::string, SavedTensor>> buffers;
    std::vector<std::pair<std::string, SavedTensor>> velocity;
};

namespace detail {

inline std::string encode_doubles(const std::vector<double>& values) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(values.size() * 16);
    for (double v : values) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        for (std::size_t byte = 0; byte < 8; ++byte) {
            unsigned char b = static_cast<unsigned char>((bits >> (8 * byte)) & 0xFF);
            out.push_back(digits[b >> 4]);
            out.push_back(digits[b & 0xF]);
        }
    }
    return out;
}

inline int hex_nibble(char c, const std::string& what) {
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    throw IoError("checkpoint: bad hex digit in " + what);
}

inline std::vector<double> decode_doubles(const std::string& hex, std::size_t expected,
                                          const std::string& what) {
    if (hex.size() != expected * 16) {
        throw IoError("checkpoint: " + what + " holds " + std::to_string(hex.size() / 16) +
                      " values, expected " + std::to_string(expected));
    }
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (std::size_t byte = 0; byte < 8; ++byte) {
            int hi = hex_nibble(hex[i * 16 + 2 * byte], what);
            int lo = hex_nibble(hex[i * 16 + 2 * byte + 1], what);
            bits |= static_cast<std::uint64_t>((hi << 4) | lo) << (8 * byte);
        }
        double v = 0.0;
        std::memcpy(&v, &bits, sizeof(v));
        out[i] = v;
    }
    return out;
}

inline std::string shape_to_string(const Shape& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += 'x';
        }
        out += std::to_string(shape[i]);
    }
    return out;
}

inline Shape parse_shape(const std::string& text, const std::string& what) {
    Shape shape;
    std::stringstream ss(text);
    std::string dim;
    while (std::getline(ss, dim, 'x')) {
        try {
            shape.push_back(std::stoul(dim));
        } catch (const std::exception&) {
            throw IoError("checkpoint: bad shape '" + text + "' in " + what);
        }
    }
    if (shape.empty()) {
        throw IoError("checkpoint: empty shape in " + what);
    }
    return shape;
}

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

inline void write_sections(std::string& out, const char* tag,
                           const std::vector<std::pair<std::string, SavedTensor>>& sections) {
    for (const auto& [name, tensor] : sections) {
        out += tag;
        out += ' ';
        out += name;
        out += ' ';
        out += shape_to_string(tensor.shape);
        out += ' ';
        out += encode_doubles(tensor.values);
        out += '\n';
    }
}

} // namespace detail

inline std::string serialize_checkpoint(const CheckpointData& data) {
    std::string out = "ERACKPT 1\n";
    out += "kind " + data.kind + "\n";
    out += "topology " + data.topology_line + "\n";
    out += "epoch " + std::to_string(data.epoch) + "\n";
    out += "rng " + std::to_string(data.rng_seed) + "\n";
    detail::write_sections(out, "param", data.params);
    detail::write_sections(out, "buffer", data.buffers);
    detail::write_sections(out, "opt", data.velocity);
    out += "end\n";
    return out;
}

inline void write_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open checkpoint '" + path + "' for writing");
    }
    out << serialize_checkpoint(data);
    if (!out) {
        throw IoError("write to checkpoint '" + path + "' failed");
    }
}

inline CheckpointData parse_checkpoint(std::istream& in, const std::string& source) {
    CheckpointData data;
    std::string line;
    std::size_t line_no = 0;
    bool saw_magic = false;
    bool saw_end = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string where = source + ":" + std::to_string(line_no);
        if (!saw_magic) {
            if (line != "ERACKPT 1") {
                throw IoError(where + ": not an ERACKPT version 1 file");
            }
            saw_magic = true;
            continue;
        }
        if (line == "end") {
            saw_end = true;
            break;
        }
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "kind") {
            ss >> data.kind;
        } else if (tag == "topology") {
            std::getline(ss, data.topology_line);
            if (!data.topology_line.empty() && data.topology_line.front() == ' ') {
                data.topology_line.erase(0, 1);
            }
        } else if (tag == "epoch") {
            ss >> data.epoch;
        } else if (tag == "rng") {
            ss >> data.rng_seed;
        } else if (tag == "param" || tag == "buffer" || tag == "opt") {
            std::string name;
            std::string shape_text;
            std::string hex;
            std::string extra;
            ss >> name >> shape_text >> hex;
            if (name.empty() || shape_text.empty() || hex.empty() || (ss >> extra)) {
                throw IoError(where + ": malformed " + tag + " section");
            }
            SavedTensor tensor;
            tensor.shape = detail::parse_shape(shape_text, where);
            tensor.values =
                detail::decode_doubles(hex, detail::shape_numel(tensor.shape), where + " " + name);
            auto& dest = tag == "param" ? data.params
                       : tag == "buffer" ? data.buffers
                                         : data.velocity;
            dest.emplace_back(std::move(name), std::move(tensor));
        } else {
            throw IoError(where + ": unknown record '" + tag + "'");
        }
    }
    if (!saw_magic) {
        throw IoError(source + ": empty checkpoint");
    }
    if (!saw_end) {
        throw IoError(source + ": truncated checkpoint (missing end)");
    }
    if (data.kind != "era" && data.kind != "teacher") {
        throw IoError(source + ": unknown checkpoint kind '" + data.kind + "'");
    }
    return data;
}

inline CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path + "'");
    }
    return parse_checkpoint(in, path);
}

// ============================================================================
// Model binding
// ============================================================================

namespace detail {

inline SavedTensor saved_from(const Tensor& t) {
    return SavedTensor{t.shape(), t.values()};
}

/// Fills every visited tensor from the sections by name, consuming them.
/// Missing, extra, and misshapen sections all fail loudly.
template <class VisitFn>
void bind_sections(std::vector<std::pair<std::string, SavedTensor>> sections, const char* tag,
                   VisitFn&& visit) {
    std::map<std::string, SavedTensor*> index;
    for (auto& [name, tensor] : sections) {
        if (!index.emplace(name, &tensor).second) {
            throw IoError(std::string("checkpoint: duplicate ") + tag + " section '" + name + "'");
        }
    }
    visit([&](const std::string& name, Tensor& dest) {
        auto it = index.find(name);
        if (it == index.end()) {
            throw TopologyError(std::string("checkpoint: missing ") + tag + " section '" + name +
                                "'");
        }
        if (it->second->shape != dest.shape()) {
            throw TopologyError(std::string("checkpoint: ") + tag + " '" + name + "' has shape " +
                                shape_to_string(it->second->shape) + ", model expects " +
                                shape_to_string(dest.shape()));
        }
        dest.values() = it->second->values;
        index.erase(it);
    });
    if (!index.empty()) {
        throw TopologyError(std::string("checkpoint: ") + tag + " section '" +
                            index.begin()->first + "' has no destination in the model");
    }
}

} // namespace detail

inline CheckpointData checkpoint_from_era(EraModel& model, const SgdMomentum* opt,
                                          std::size_t epoch, std::uint64_t rng_seed) {
    CheckpointData data;
    data.kind = "era";
    data.topology_line = to_string(model.topology);
    data.epoch = epoch;
    data.rng_seed = rng_seed;
    model.visit_params([&](const std::string& name, Tensor& t) {
        data.params.emplace_back(name, detail::saved_from(t));
    });
    model.visit_buffers([&](const std::string& name, Tensor& t) {
        data.buffers.emplace_back(name, detail::saved_from(t));
    });
    if (opt != nullptr) {
        model.visit_params([&](const std::string& name, Tensor&) {
            auto it = opt->velocity().find(name);
            if (it != opt->velocity().end()) {
                data.velocity.emplace_back(name, detail::saved_from(it->second));
            }
        });
    }
    return data;
}

struct EraRestore {
    EraModel model;
    std::map<std::string, Tensor> velocity;
    std::size_t epoch = 0;
    std::uint64_t rng_seed = 0;
};

inline EraRestore restore_era(const CheckpointData& data) {
    if (data.kind != "era") {
        throw TopologyError("checkpoint holds a '" + data.kind + "' model, expected 'era'");
    }
    EraRestore out{EraModel(parse_topology(data.topology_line)), {}, data.epoch, data.rng_seed};
    detail::bind_sections(data.params, "param",
                          [&](auto&& fn) { out.model.visit_params(fn); });
    detail::bind_sections(data.buffers, "buffer",
                          [&](auto&& fn) { out.model.visit_buffers(fn); });
    for (const auto& [name, tensor] : data.velocity) {
        Tensor t = Tensor::zeros(tensor.shape);
        t.values() = tensor.values;
        if (!out.velocity.emplace(name, t).second) {
            throw IoError("checkpoint: duplicate opt section '" + name + "'");
        }
    }
    return out;
}

inline std::string teacher_topology_line(const TeacherModel& teacher) {
    return "teacher=" + widths_to_string(teacher.encoder.widths) +
           " classes=" + std::to_string(teacher.head.classes());
}

inline CheckpointData checkpoint_from_teacher(TeacherModel& teacher, std::size_t epoch,
                                              std::uint64_t rng_seed) {
    CheckpointData data;
    data.kind = "teacher";
    data.topology_line = teacher_topology_line(teacher);
    data.epoch = epoch;
    data.rng_seed = rng_seed;
    teacher.visit_params([&](const std::string& name, Tensor& t) {
        data.params.emplace_back(name, detail::saved_from(t));
    });
    teacher.visit_buffers([&](const std::string& name, Tensor& t) {
        data.buffers.emplace_back(name, detail::saved_from(t));
    });
    return data;
}

struct TeacherRestore {
    TeacherModel model;
    std::size_t epoch = 0;
    std::uint64_t rng_seed = 0;
};

inline TeacherRestore restore_teacher(const CheckpointData& data) {
    if (data.kind != "teacher") {
        throw TopologyError("checkpoint holds a '" + data.kind + "' model, expected 'teacher'");
    }
    std::vector<std::size_t> widths;
    std::size_t classes = 0;
    std::istringstream ss(data.topology_line);
    std::string token;
    while (ss >> token) {
        std::size_t eq = token.find('=');
        if (eq == std::string::npos) {
            throw IoError("checkpoint: malformed teacher topology '" + data.topology_line + "'");
        }
        std::string key = token.substr(0, eq);
        std::string value = token.substr(eq + 1);
        if (key == "teacher") {
            widths = parse_widths(value);
        } else if (key == "classes") {
            classes = std::stoul(value);
        } else {
            throw IoError("checkpoint: unknown teacher topology field '" + key + "'");
        }
    }
    if (widths.empty() || classes == 0) {
        throw IoError("checkpoint: incomplete teacher topology '" + data.topology_line + "'");
    }
    TeacherRestore out{TeacherModel(widths, classes), data.epoch, data.rng_seed};
    detail::bind_sections(data.params, "param",
                          [&](auto&& fn) { out.model.visit_params(fn); });
    detail::bind_sections(data.buffers, "buffer",
                          [&](auto&& fn) { out.model.visit_buffers(fn); });
    out.model.set_trainable(false);
    out.model.set_mode(Mode::eval);
    return out;
}

} // namespace era
