#include <cstdio>

long sumRange(const long* a, int lo, int hi) {
    if (hi - lo <= 2) {
        long s = 0;
        for (int i = lo; i < hi; i++) {
            s += a[i];
        }
        return s;
    }
    int mid = (lo + hi) / 2;
    long left = sumRange(a, lo, mid);
    long right = sumRange(a, mid, hi);
    return left + right;
}

int main() {
    long values[9];
    for (int i = 0; i < 9; i++) {
        values[i] = i * i + 1;
    }
    long total = sumRange(values, 0, 9);
    printf("%ld\n", total);
    return 0;
}
