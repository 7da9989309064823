void work(int& v, const int w){
    v = w;
}
void scoped(bool cond, int z){
    #pragma omp taskgroup
    {
        if(cond){
            int* apac_ptr_var1 = new int();
            int& var1 = *apac_ptr_var1;
            int& var2 = z;
            #pragma omp task depend(in: var2) depend(inout: var1) default(shared)
            {
                work(var1, var2);
            }
            #pragma omp task depend(inout: var1) firstprivate(apac_ptr_var1) default(shared)
            {
                delete apac_ptr_var1;
            }
        }
    }
}
