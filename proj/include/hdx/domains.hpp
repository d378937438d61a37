#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace hdx {

struct Box {
    std::vector<double> lo, hi;
    bool contains(const double* x) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (x[i] <= lo[i] || x[i] >= hi[i]) return false;
        return true;
    }
    double volume() const {
        double v = 1;
        for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
        return v;
    }
};

// a named bounded domain: point membership plus a bounding box on which voxel grids are laid
struct DomainSpec {
    std::string name;
    int dim = 0;
    std::vector<double> lo, hi;
    nlohmann::json params = nlohmann::json::object();
    std::function<bool(const double*)> contains;

    double diameter() const {
        double s = 0;
        for (int i = 0; i < dim; ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
        return std::sqrt(s);
    }
};

inline std::vector<std::string> known_domains() { return {"interval", "disc", "square", "cube", "annulus", "lshape", "twobrick"}; }

inline DomainSpec make_domain(const std::string& name, const nlohmann::json& params = nlohmann::json::object()) {
    DomainSpec d;
    d.name = name;
    d.params = params.is_null() ? nlohmann::json::object() : params;
    auto boxes = [&d](std::vector<Box> bs) {
        d.contains = [bs](const double* x) {
            for (const auto& b : bs)
                if (b.contains(x)) return true;
            return false;
        };
    };
    if (name == "interval") {
        d.dim = 1;
        d.lo = {0};
        d.hi = {1};
        boxes({{{0}, {1}}});
    } else if (name == "square") {
        d.dim = 2;
        d.lo = {0, 0};
        d.hi = {1, 1};
        boxes({{{0, 0}, {1, 1}}});
    } else if (name == "cube") {
        d.dim = 3;
        d.lo = {0, 0, 0};
        d.hi = {1, 1, 1};
        boxes({{{0, 0, 0}, {1, 1, 1}}});
    } else if (name == "disc") {
        d.dim = 2;
        d.lo = {-1, -1};
        d.hi = {1, 1};
        d.contains = [](const double* x) { return x[0] * x[0] + x[1] * x[1] < 1; };
    } else if (name == "annulus") {
        double r0 = d.params.value("r_inner", 0.5), r1 = d.params.value("r_outer", 1.0);
        if (!(r0 > 0 && r1 > r0)) throw std::invalid_argument("annulus: need 0 < r_inner < r_outer");
        d.params["r_inner"] = r0;
        d.params["r_outer"] = r1;
        d.dim = 2;
        d.lo = {-r1, -r1};
        d.hi = {r1, r1};
        d.contains = [r0, r1](const double* x) {
            double r2 = x[0] * x[0] + x[1] * x[1];
            return r2 > r0 * r0 && r2 < r1 * r1;
        };
    } else if (name == "lshape") {
        // (-1,1)^2 minus [0,1)x[0,1)
        d.dim = 2;
        d.lo = {-1, -1};
        d.hi = {1, 1};
        d.contains = [](const double* x) {
            if (x[0] <= -1 || x[0] >= 1 || x[1] <= -1 || x[1] >= 1) return false;
            return !(x[0] >= 0 && x[1] >= 0);
        };
    } else if (name == "twobrick") {
        d.dim = 3;
        d.lo = {-2, -2, -1};
        d.hi = {2, 2, 1};
        Box a{{-1, -2, 0}, {1, 2, 1}}, b{{-2, -1, -1}, {2, 1, 0}};
        d.contains = [a, b](const double* x) {
            if (a.contains(x) || b.contains(x)) return true;
            // the shared face interior at z = 0
            return std::abs(x[0]) < 1 && std::abs(x[1]) < 1 && std::abs(x[2]) < 1;
        };
    } else {
        throw std::invalid_argument("unknown domain: " + name);
    }
    return d;
}

}  // namespace hdx
