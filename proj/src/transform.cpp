#include "vid2wsi/transform.hpp"

#include "vid2wsi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vid2wsi {

std::string_view to_string(TransformModel model) {
    switch (model) {
        case TransformModel::Translation: return "translation";
        case TransformModel::Similarity: return "similarity";
        case TransformModel::Affine: return "affine";
        case TransformModel::Homography: return "homography";
    }
    return "unknown";
}

TransformModel transform_model_from_string(std::string_view name) {
    for (auto m : {TransformModel::Translation, TransformModel::Similarity, TransformModel::Affine,
                   TransformModel::Homography})
        if (to_string(m) == name) return m;
    throw Error(ErrorKind::InvalidArgument, "unknown transform model '" + std::string(name) + "'");
}

int minimal_sample_size(TransformModel model) {
    switch (model) {
        case TransformModel::Translation: return 1;
        case TransformModel::Similarity: return 2;
        case TransformModel::Affine: return 3;
        case TransformModel::Homography: return 4;
    }
    return 4;
}

Transform2D Transform2D::translation(double tx, double ty) {
    return {{1, 0, tx, 0, 1, ty, 0, 0, 1}, TransformModel::Translation};
}

Transform2D Transform2D::similarity(double scale, double angle_rad, double tx, double ty) {
    const double c = scale * std::cos(angle_rad);
    const double s = scale * std::sin(angle_rad);
    return {{c, -s, tx, s, c, ty, 0, 0, 1}, TransformModel::Similarity};
}

Transform2D Transform2D::scaling(double sx, double sy) {
    if (sx == sy) return {{sx, 0, 0, 0, sy, 0, 0, 0, 1}, TransformModel::Similarity};
    return {{sx, 0, 0, 0, sy, 0, 0, 0, 1}, TransformModel::Affine};
}

Transform2D Transform2D::affine(double a, double b, double tx, double c, double d, double ty) {
    return {{a, b, tx, c, d, ty, 0, 0, 1}, TransformModel::Affine};
}

Transform2D Transform2D::from_matrix(const Matrix& m, TransformModel model) {
    if (model != TransformModel::Homography && (m[6] != 0 || m[7] != 0 || m[8] != 1))
        throw Error(ErrorKind::InvalidArgument, "non-projective transform must have bottom row (0, 0, 1)");
    if (model == TransformModel::Translation && (m[0] != 1 || m[1] != 0 || m[3] != 0 || m[4] != 1))
        throw Error(ErrorKind::InvalidArgument, "translation must have identity linear part");
    return {m, model};
}

Point2 Transform2D::apply(Point2 p) const {
    const double x = m_[0] * p.x + m_[1] * p.y + m_[2];
    const double y = m_[3] * p.x + m_[4] * p.y + m_[5];
    if (model_ != TransformModel::Homography) return {x, y};
    const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
    return {x / w, y / w};
}

double Transform2D::det() const {
    return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
           m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
}

bool Transform2D::invertible() const {
    const double d = model_ == TransformModel::Homography ? det() : linear_det();
    return std::isfinite(d) && std::abs(d) > kSingularTolerance;
}

Transform2D Transform2D::inverse() const {
    if (!invertible()) throw Error(ErrorKind::SingularTransform, "transform is not invertible");
    if (model_ != TransformModel::Homography) {
        const double d = linear_det();
        const double a = m_[4] / d, b = -m_[1] / d, c = -m_[3] / d, e = m_[0] / d;
        if (model_ == TransformModel::Translation) return translation(-m_[2], -m_[5]);
        return {{a, b, -(a * m_[2] + b * m_[5]), c, e, -(c * m_[2] + e * m_[5]), 0, 0, 1}, model_};
    }
    const double d = det();
    Matrix inv{
        (m_[4] * m_[8] - m_[5] * m_[7]) / d, (m_[2] * m_[7] - m_[1] * m_[8]) / d, (m_[1] * m_[5] - m_[2] * m_[4]) / d,
        (m_[5] * m_[6] - m_[3] * m_[8]) / d, (m_[0] * m_[8] - m_[2] * m_[6]) / d, (m_[2] * m_[3] - m_[0] * m_[5]) / d,
        (m_[3] * m_[7] - m_[4] * m_[6]) / d, (m_[1] * m_[6] - m_[0] * m_[7]) / d, (m_[0] * m_[4] - m_[1] * m_[3]) / d,
    };
    return {inv, model_};
}

Transform2D compose(const Transform2D& a, const Transform2D& b) {
    Transform2D::Matrix r{};
    const auto& x = a.matrix();
    const auto& y = b.matrix();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r[3 * i + j] = x[3 * i] * y[j] + x[3 * i + 1] * y[3 + j] + x[3 * i + 2] * y[6 + j];
    const TransformModel model = std::max(a.model(), b.model());
    if (model == TransformModel::Translation) return Transform2D::translation(r[2], r[5]);
    if (model != TransformModel::Homography) r[6] = r[7] = 0, r[8] = 1;
    return Transform2D::from_matrix(r, model);
}

double max_abs_diff(const Transform2D& a, const Transform2D& b) {
    double d = 0;
    for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(a.matrix()[i] - b.matrix()[i]));
    return d;
}

double max_rel_diff(const Transform2D& a, const Transform2D& ref) {
    double d = 0;
    for (int i = 0; i < 9; ++i)
        d = std::max(d, std::abs(a.matrix()[i] - ref.matrix()[i]) / std::max(std::abs(ref.matrix()[i]), 1.0));
    return d;
}

}  // namespace vid2wsi
