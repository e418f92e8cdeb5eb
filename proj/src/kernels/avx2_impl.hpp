#pragma once

#include <cstddef>
#include <cstdint>

// AVX2 variants. Declarations only; the definitions live in a translation
// unit compiled with -mavx2 and are called strictly behind a runtime
// cpuid check.

namespace sabr::kernels::vx {

void gemm_f32(const float* a, const float* b, float* c, int m, int k, int n, bool acc);
void gemm_f64(const double* a, const double* b, double* c, int m, int k, int n, bool acc);

void axpy_f32(float* y, float alpha, const float* x, size_t n);
void axpy_f64(double* y, double alpha, const double* x, size_t n);

void vadd_f32(float* out, const float* a, const float* b, size_t n);
void vadd_f64(double* out, const double* a, const double* b, size_t n);
void vsub_f32(float* out, const float* a, const float* b, size_t n);
void vsub_f64(double* out, const double* a, const double* b, size_t n);
void vmul_f32(float* out, const float* a, const float* b, size_t n);
void vmul_f64(double* out, const double* a, const double* b, size_t n);
void vabs_f32(float* out, const float* a, size_t n);
void vabs_f64(double* out, const double* a, size_t n);
void vscale_f32(float* out, const float* a, float alpha, float beta, size_t n);
void vscale_f64(double* out, const double* a, double alpha, double beta, size_t n);
void vclamp_f32(float* out, const float* x, const float* lo, const float* hi, size_t n);
void vclamp_f64(double* out, const double* x, const double* lo, const double* hi, size_t n);
void vclamp_const_f32(float* out, const float* x, float lo, float hi, size_t n);
void vclamp_const_f64(double* out, const double* x, double lo, double hi, size_t n);

void relu_f32(float* out, const float* x, size_t n);
void relu_f64(double* out, const double* x, size_t n);
void relu_backward_f32(float* gx, const float* gy, const float* x, size_t n);
void relu_backward_f64(double* gx, const double* gy, const double* x, size_t n);

void box_relu_f32(float* oc, float* orr, uint8_t* mask, const float* c, const float* r, float cs, size_t n);
void box_relu_f64(double* oc, double* orr, uint8_t* mask, const double* c, const double* r, double cs, size_t n);
void box_relu_backward_f32(float* gc, float* gr, const float* goc, const float* gor, const uint8_t* mask, float cs,
                           size_t n);
void box_relu_backward_f64(double* gc, double* gr, const double* goc, const double* gor, const uint8_t* mask,
                           double cs, size_t n);

void sign_step_f32(float* y, const float* g, float step, size_t n);
void sign_step_f64(double* y, const double* g, double step, size_t n);

void outer_acc_signed_f32(float* dw, const float* w, const float* a, const float* b, int m, int n);
void outer_acc_signed_f64(double* dw, const double* w, const double* a, const double* b, int m, int n);
void outer_acc_f32(float* dw, const float* a, const float* b, int m, int n);
void outer_acc_f64(double* dw, const double* a, const double* b, int m, int n);

}  // namespace sabr::kernels::vx
