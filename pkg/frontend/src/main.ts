import { DashboardClient } from './api.js';
import { DashboardApp } from './app.js';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');

new DashboardApp({
  root,
  clientFactory: (token, baseUrl) => new DashboardClient(token, baseUrl),
}).start();
