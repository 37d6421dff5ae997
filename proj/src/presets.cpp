#include "lprune/presets.hpp"

#include <stdexcept>

namespace lprune {

namespace {

Unit conv_unit(int id, int in_ch, int out_ch, int stride) {
    Unit u;
    u.id = id;
    u.body.push_back(make_conv1d(in_ch, out_ch, 3, stride, 1, false));
    u.body.push_back(make_batchnorm(out_ch));
    u.body.push_back(ReLU{});
    return u;
}

Unit residual_unit(int id, int in_ch, int out_ch, int stride) {
    Unit u;
    u.id = id;
    u.body.push_back(make_conv1d(in_ch, out_ch, 3, stride, 1, false));
    u.body.push_back(make_batchnorm(out_ch));
    u.body.push_back(ReLU{});
    u.body.push_back(make_conv1d(out_ch, out_ch, 3, 1, 1, false));
    u.body.push_back(make_batchnorm(out_ch));
    if (in_ch == out_ch && stride == 1) {
        u.skip = SkipKind::Identity;
    } else {
        u.skip = SkipKind::Projection;
        u.projection = make_conv1d(in_ch, out_ch, 1, stride, 0, false);
    }
    return u;
}

void add_head(ModelGraph& m, int feat, int num_classes) {
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(feat, num_classes, true));
    m.num_classes = num_classes;
}

}  // namespace

ModelGraph make_preset(const std::string& name, int num_classes) {
    if (num_classes <= 1) throw std::runtime_error("preset: num_classes must be >= 2");
    ModelGraph m;
    m.in_channels = 2;
    if (name == "tiny4") {
        m.units.push_back(conv_unit(0, 2, 8, 1));
        m.units.push_back(conv_unit(1, 8, 16, 2));
        m.units.push_back(conv_unit(2, 16, 16, 1));
        m.units.push_back(conv_unit(3, 16, 32, 2));
        add_head(m, 32, num_classes);
        return m;
    }
    if (name == "vgg8") {
        m.units.push_back(conv_unit(0, 2, 16, 1));
        m.units.push_back(conv_unit(1, 16, 16, 1));
        m.units.push_back(conv_unit(2, 16, 32, 2));
        m.units.push_back(conv_unit(3, 32, 32, 1));
        m.units.push_back(conv_unit(4, 32, 48, 2));
        m.units.push_back(conv_unit(5, 48, 48, 1));
        m.units.push_back(conv_unit(6, 48, 64, 2));
        m.units.push_back(conv_unit(7, 64, 64, 1));
        add_head(m, 64, num_classes);
        return m;
    }
    if (name == "resnet10") {
        m.units.push_back(conv_unit(0, 2, 16, 1));
        m.units.push_back(residual_unit(1, 16, 16, 1));
        m.units.push_back(residual_unit(2, 16, 32, 2));
        m.units.push_back(residual_unit(3, 32, 48, 2));
        m.units.push_back(residual_unit(4, 48, 64, 2));
        add_head(m, 64, num_classes);
        return m;
    }
    throw std::runtime_error("unknown architecture preset: " + name);
}

std::vector<std::string> preset_names() { return {"tiny4", "vgg8", "resnet10"}; }

}  // namespace lprune
