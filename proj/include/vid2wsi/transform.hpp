#pragma once

#include <array>
#include <string_view>

namespace vid2wsi {

struct Point2 {
    double x = 0;
    double y = 0;
};

/// Ordered from most to least constrained; `compose` keeps the more general one.
enum class TransformModel { Translation = 0, Similarity = 1, Affine = 2, Homography = 3 };

std::string_view to_string(TransformModel model);
TransformModel transform_model_from_string(std::string_view name);

/// Number of correspondences that determine a model.
int minimal_sample_size(TransformModel model);

/// 3x3 row-major planar transform mapping source pixel coordinates to canvas
/// coordinates. Pixel (x, y) refers to the pixel centre.
class Transform2D {
public:
    using Matrix = std::array<double, 9>;

    /// Tolerance below which a determinant counts as singular.
    static constexpr double kSingularTolerance = 1e-12;

    Transform2D() = default;

    static Transform2D identity() { return {}; }
    static Transform2D translation(double tx, double ty);
    static Transform2D similarity(double scale, double angle_rad, double tx, double ty);
    static Transform2D scaling(double sx, double sy);
    static Transform2D affine(double a, double b, double tx, double c, double d, double ty);
    /// Validates the model constraints (bottom row, identity linear part for translations).
    static Transform2D from_matrix(const Matrix& m, TransformModel model);

    const Matrix& matrix() const { return m_; }
    double operator()(int r, int c) const { return m_[3 * r + c]; }
    TransformModel model() const { return model_; }

    Point2 apply(Point2 p) const;
    Point2 apply(double x, double y) const { return apply(Point2{x, y}); }

    /// Determinant of the upper-left 2x2 block.
    double linear_det() const { return m_[0] * m_[4] - m_[1] * m_[3]; }
    /// Determinant of the full matrix.
    double det() const;
    bool invertible() const;

    /// Throws Error(SingularTransform) when not invertible.
    Transform2D inverse() const;

    friend bool operator==(const Transform2D&, const Transform2D&) = default;

private:
    Transform2D(const Matrix& m, TransformModel model) : m_(m), model_(model) {}

    Matrix m_{1, 0, 0, 0, 1, 0, 0, 0, 1};
    TransformModel model_ = TransformModel::Translation;
};

/// Matrix product a * b (apply b first, then a); model is the more general of the two.
Transform2D compose(const Transform2D& a, const Transform2D& b);

/// Largest elementwise absolute difference between two matrices.
double max_abs_diff(const Transform2D& a, const Transform2D& b);

/// Largest elementwise |a - ref| / max(|ref|, 1). Entries below one in magnitude
/// (rotation terms, the bottom row) are compared absolutely.
double max_rel_diff(const Transform2D& a, const Transform2D& ref);

}  // namespace vid2wsi
