#include <stdio.h>
#include <stdlib.h>
#include <time.h>

#ifndef N
#define N 512
#endif

static double A[N][N], B[N][N], C[N][N];

int main(void) {
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      A[i][j] = (double)(i * j % 7) / 7.0;
      B[i][j] = (double)(i + j) / N;
      C[i][j] = 0.0;
    }

  struct timespec t0, t1;
  clock_gettime(CLOCK_MONOTONIC, &t0);
  /*@loop:i*/
  for (int i = 0; i < N; ++i)
    /*@loop:j*/
    for (int j = 0; j < N; ++j)
      /*@loop:k*/
      for (int k = 0; k < N; ++k)
        C[i][j] += A[i][k] * B[k][j];
  clock_gettime(CLOCK_MONOTONIC, &t1);

  fprintf(stderr, "checksum %f\n", C[N / 2][N / 3]);
  printf("%.6f\n", (t1.tv_sec - t0.tv_sec) + 1e-9 * (t1.tv_nsec - t0.tv_nsec));
  return 0;
}
