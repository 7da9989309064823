#include <cstdio>

int partition(int* arr, int n) {
    int pivot = arr[n - 1];
    int store = 0;
    for (int i = 0; i < n - 1; i++) {
        if (arr[i] < pivot) {
            int t = arr[i];
            arr[i] = arr[store];
            arr[store] = t;
            store++;
        }
    }
    int last = arr[n - 1];
    arr[n - 1] = arr[store];
    arr[store] = last;
    return store;
}

void quicksort(int* arr, int n) {
    if (n <= 1) {
        return;
    }
    int p = partition(arr, n);
    int* left = arr;
    int* right = arr + p + 1;
    quicksort(left, p);
    quicksort(right, n - p - 1);
}

int main() {
    int data[4096];
    long seed = 2024;
    for (int i = 0; i < 4096; i++) {
        seed = (seed * 1103515245 + 12345) % 2147483648;
        data[i] = seed % 100000;
    }
    quicksort(data, 4096);
    int sorted = 1;
    long checksum = 0;
    for (int i = 0; i < 4096; i++) {
        if (i > 0 && data[i - 1] > data[i]) {
            sorted = 0;
        }
        checksum = (checksum * 31 + data[i]) % 1000000007;
    }
    printf("%d %ld\n", sorted, checksum);
    return 0;
}
