/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_market_free: (a: number, b: number) => void;
export const __wbg_replay_free: (a: number, b: number) => void;
export const market_bound: (a: number, b: number) => [number, number, number];
export const market_is_empty: (a: number) => number;
export const market_len: (a: number) => number;
export const market_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const market_price_forecast: (a: number, b: number) => [number, number, number, number];
export const market_prices: (a: number, b: number) => [number, number, number, number];
export const market_product: (a: number, b: number) => [number, number, number, number];
export const market_report: (a: number) => [number, number, number, number];
export const market_run: (a: number, b: number, c: number, d: number) => [number, number, number];
export const market_wind: (a: number, b: number) => [number, number, number, number];
export const replay_profit: (a: number) => number;
export const replay_steps: (a: number) => number;
export const replay_volumes: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
