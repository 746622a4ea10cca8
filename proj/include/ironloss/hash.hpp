#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>
#include <type_traits>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace ironloss {

/// 64-bit FNV-1a over raw bytes; used for cache keys and config hashes.
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    template <class T>
    Fnv1a& value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        return bytes(&v, sizeof(T));
    }
    Fnv1a& text(std::string_view s) { return value(s.size()).bytes(s.data(), s.size()); }
    template <class Derived>
    Fnv1a& dense(const Eigen::DenseBase<Derived>& m) {
        value(m.rows()).value(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) value(static_cast<double>(m(i, j)));
        return *this;
    }
    Fnv1a& sparse(const Eigen::SparseMatrix<double>& m) {
        value(m.rows()).value(m.cols());
        for (int k = 0; k < m.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
                value(it.row()).value(it.col()).value(it.value());
        return *this;
    }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace ironloss
