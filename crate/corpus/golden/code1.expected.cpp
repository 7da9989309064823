void a_function(const int a, const int* b, int& c){
    c = a + 1;
}
void a_function_with_call(const int a, const int* b, int& c){
    #pragma omp taskgroup
    {
        #pragma omp task depend(in:a,b) depend(inout:c) default(shared)
        {
            a_function(a,b,c);
        }
    }
}
int main(){
    #pragma omp parallel
    #pragma omp master
    #pragma omp taskgroup
    {
        int a; int *b; int c;
        #pragma omp task depend(in:a,b) depend(inout:c) default(shared)
        {
            a_function_with_call(a,b,c);
        }
    }
    return 0;
}
